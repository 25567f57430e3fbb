"""Deterministic local plugin-store emulator for offline audit runs.

A fixture plan declares the store index, per-host manifest/API documents,
and per-endpoint behaviors (auth enforcement, fixed failure statuses,
counter-based rate limits). The bundled "paper-tables" profile generates a
1032-plugin population whose full audit reproduces the reference result
tables; the "revisit" profile generates the remediated population used for
before/after diffing.

All responses are a pure function of (plan, per-endpoint request counter);
nothing depends on the wall clock.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

PROFILE_PAPER_TABLES = "paper-tables"
PROFILE_REVISIT = "revisit"

LANDING_HOST = "landing.adsite.example"
_LANDING_BODY = b"<html><head><title>Welcome</title></head><body><h1>Member portal</h1></body></html>"


def _builtin_denial(host: str) -> int | None:
    """Hosted-platform hosts emulated without a site entry."""
    if host == "github.com" or host.endswith(".github.com") or host.endswith(".githubusercontent.com"):
        return 404
    if host in ("drive.google.com", "docs.google.com"):
        return 403
    if host in ("chat.openai.com", "openai.com") or host.endswith(".openai.com"):
        return 403
    return None


WK_MANIFEST = "manifest"
WK_REDIRECT = "redirect"
WK_DENIED_403 = "denied:403"
WK_DENIED_404 = "denied:404"


@dataclass
class FixtureEndpoint:
    path: str
    method: str = "GET"
    status_ok: int = 200
    body_ok: dict | None = None
    requires_token: bool = False
    required_token: str | None = None
    fail_status: int = 401
    rate_limit_after: int | None = None

    def to_doc(self) -> dict:
        return {
            "path": self.path,
            "method": self.method,
            "status_ok": self.status_ok,
            "body_ok": self.body_ok,
            "requires_token": self.requires_token,
            "required_token": self.required_token,
            "fail_status": self.fail_status,
            "rate_limit_after": self.rate_limit_after,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FixtureEndpoint":
        return cls(**doc)


@dataclass
class FixtureSite:
    host: str
    well_known: str = WK_DENIED_404
    manifest: dict | None = None
    redirect_to: str | None = None
    openapi: dict | None = None
    openapi_raw: str | None = None
    endpoints: list[FixtureEndpoint] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "host": self.host,
            "well_known": self.well_known,
            "manifest": self.manifest,
            "redirect_to": self.redirect_to,
            "openapi": self.openapi,
            "openapi_raw": self.openapi_raw,
            "endpoints": [e.to_doc() for e in self.endpoints],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FixtureSite":
        doc = dict(doc)
        doc["endpoints"] = [FixtureEndpoint.from_doc(e) for e in doc.get("endpoints", [])]
        return cls(**doc)


@dataclass
class FixturePlan:
    profile: str
    seed: int
    index: list[dict] = field(default_factory=list)
    sites: dict[str, FixtureSite] = field(default_factory=dict)
    listen_port: int = 0

    def to_doc(self) -> dict:
        return {
            "profile": self.profile,
            "seed": self.seed,
            "listen_port": self.listen_port,
            "index": self.index,
            "sites": {host: site.to_doc() for host, site in sorted(self.sites.items())},
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FixturePlan":
        sites = {host: FixtureSite.from_doc(site) for host, site in doc.get("sites", {}).items()}
        return cls(
            profile=doc.get("profile", ""),
            seed=int(doc.get("seed", 0)),
            index=list(doc.get("index", [])),
            sites=sites,
            listen_port=int(doc.get("listen_port", 0)),
        )


def save_plan(plan: FixturePlan, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(plan.to_doc(), sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_plan(path: str | Path) -> FixturePlan:
    return FixturePlan.from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def index_ndjson(plan: FixturePlan) -> str:
    return "\n".join(json.dumps(entry, sort_keys=True) for entry in plan.index) + "\n"


def write_index_ndjson(plan: FixturePlan, path: str | Path) -> None:
    Path(path).write_text(index_ndjson(plan), encoding="utf-8")


# --------------------------------------------------------------------------
# Plan generation


def _title_from_slug(slug: str) -> str:
    return " ".join(word.capitalize() for word in slug.replace("-", " ").split())


def _compact(name: str) -> str:
    return "".join(ch for ch in name if ch.isalnum())


def _manifest_doc(
    host: str,
    name_for_human: str,
    auth: dict,
    description: str | None = "Audit fixture plugin.",
    include_model_description: bool = True,
    legal_path: str = "/legal",
) -> dict:
    doc = {
        "schema_version": "v1",
        "name_for_human": name_for_human,
        "name_for_model": _compact(name_for_human),
        "auth": auth,
        "api": {"type": "openapi", "url": f"https://{host}/openapi.json", "is_user_authenticated": False},
        "logo_url": f"https://{host}/logo.png",
        "contact_email": f"support@{host}",
        "legal_info_url": f"https://{host}{legal_path}",
    }
    if description is not None:
        doc["description_for_human"] = description
    if include_model_description:
        doc["description_for_model"] = f"Use this plugin to reach {name_for_human}."
    return doc


def _openapi_doc(host: str, title: str, with_search: bool = False) -> dict:
    paths: dict = {
        "/status": {
            "get": {
                "operationId": "getStatus",
                "responses": {
                    "200": {
                        "description": "ok",
                        "content": {
                            "application/json": {"schema": {"$ref": "#/components/schemas/StatusResponse"}}
                        },
                    }
                },
            }
        }
    }
    if with_search:
        paths["/search"] = {
            "post": {
                "operationId": "search",
                "requestBody": {
                    "content": {"application/json": {"schema": {"$ref": "#/components/schemas/SearchRequest"}}}
                },
                "responses": {
                    "200": {
                        "description": "ok",
                        "content": {
                            "application/json": {"schema": {"$ref": "#/components/schemas/StatusResponse"}}
                        },
                    }
                },
            }
        }
    return {
        "openapi": "3.0.1",
        "info": {"title": title, "version": "1.0"},
        "servers": [{"url": f"https://{host}/api"}],
        "paths": paths,
        "components": {
            "schemas": {
                "StatusResponse": {"type": "object"},
                "SearchRequest": {"type": "object", "properties": {"query": {"type": "string"}}},
            }
        },
    }


_AUTH_NONE = {"type": "none"}


def _auth_oauth(host: str, scope: str | None, verification_token: str | None = None) -> dict:
    auth: dict = {
        "type": "oauth",
        "client_url": f"https://{host}/oauth",
        "authorization_url": f"https://{host}/oauth/authorize",
        "authorization_content_type": "application/json",
    }
    if scope is not None:
        auth["scope"] = scope
    if verification_token is not None:
        auth["verification_tokens"] = {"openai": verification_token}
    return auth


def _auth_service_bearer(verification_token: str | None) -> dict:
    auth: dict = {"type": "service_http", "authorization_type": "bearer"}
    if verification_token is not None:
        auth["verification_tokens"] = {"openai": verification_token}
    return auth


_AUTH_USER_BEARER = {"type": "user_http", "authorization_type": "bearer"}

_MIXERBOX_VARIANTS = (
    "Calculator", "ChatPDF", "Calendar", "Translate", "WebSearchG", "Weather",
    "NewsGPT", "Podcasts", "ImageGen", "Prompt", "FindMyMusic", "ChatVideo",
    "ChatMap", "Diagrams", "QR", "Scholar",
)

# OAuth scope strings by category, in deterministic assignment order.
_SCOPES_GLOBAL = ["all"] * 8 + ["baas-full-access"]
_SCOPES_READ_WRITE = ["read+write"] * 6 + ["read write read offline_access"]
_SCOPES_OPENAI = ["openai"] * 4 + ["oai11/global", "openid email https://openai.videoinsights.io/all"]
_SCOPES_IDENTITY = (
    ["email"] * 4
    + ["profile"] * 2
    + ["w_member_social openid profile email", "openid offline_access"]
    + ["playlist-modify-public user-read-email"] * 3
)
_SCOPES_PROJECT = ["project", "basic_access email offline_access manage_library"]
_SCOPES_EXECUTE = ["nla:exposed_actions"]


class _PlanBuilder:
    def __init__(self, profile: str, seed: int):
        self.plan = FixturePlan(profile=profile, seed=seed)
        self.rng = random.Random(seed)

    def add_index_entry(self, title: str, legal: str, description: str | None = None, host: str | None = None) -> None:
        entry = {
            "title": title,
            "name": title,
            "legal_info_url": legal,
            "logo_url": f"https://{host or 'store.example'}/logo.png",
        }
        if description is not None:
            entry["description"] = description
        self.plan.index.append(entry)

    def add_site(self, site: FixtureSite) -> None:
        self.plan.sites[site.host] = site

    def accessible_plugin(
        self,
        slug: str,
        auth: dict,
        endpoints: list[FixtureEndpoint],
        store_title: str | None = None,
        manifest_name: str | None = None,
        store_description: str | None = "Audit fixture plugin.",
        manifest_description: str | None = "Audit fixture plugin.",
        include_model_description: bool = True,
        manifest_legal_path: str = "/legal",
        store_legal: str | None = None,
        openapi: dict | str | None = "default",
        host: str | None = None,
        skip_site: bool = False,
    ) -> None:
        host = host or f"{slug}.example"
        title = store_title or _title_from_slug(slug)
        name = manifest_name or title
        legal = store_legal or f"https://{host}/legal"
        self.add_index_entry(title, legal, description=store_description, host=host)
        if skip_site:
            return
        site = FixtureSite(host=host, well_known=WK_MANIFEST)
        site.manifest = _manifest_doc(
            host,
            name,
            auth,
            description=manifest_description,
            include_model_description=include_model_description,
            legal_path=manifest_legal_path,
        )
        if openapi == "default":
            site.openapi = _openapi_doc(host, f"{name} API")
        elif isinstance(openapi, dict):
            site.openapi = openapi
        elif isinstance(openapi, str):
            site.openapi_raw = openapi
        site.endpoints = endpoints
        self.add_site(site)

    def finish(self) -> FixturePlan:
        self.rng.shuffle(self.plan.index)
        self.plan.sites.setdefault(LANDING_HOST, FixtureSite(host=LANDING_HOST))
        return self.plan


def _ok_endpoint(requires_token: bool = False, token: str | None = None, fail_status: int = 401) -> FixtureEndpoint:
    return FixtureEndpoint(
        path="/api/status",
        method="GET",
        status_ok=200,
        body_ok={"status": "ok"},
        requires_token=requires_token,
        required_token=token,
        fail_status=fail_status,
    )


def _fail_endpoint(status: int, path: str = "/api/status") -> FixtureEndpoint:
    body = {"error": "bad request"} if status == 400 else {"error": "denied"}
    if status == 429:
        body = {"error": "rate limit exceeded"}
    return FixtureEndpoint(path=path, method="GET", status_ok=status, body_ok=body)


def _add_oauth_population(builder: _PlanBuilder, n_case1: int, n_case3: int, n_case2: int, scopes: list[str | None]) -> None:
    """OAuth plugins: case1 honor their leaked verification token, case3
    serve data regardless of the declared auth, case2 enforce strictly."""
    slugs = (
        [f"oauth-c1-{i:02d}" for i in range(1, n_case1 + 1)]
        + [f"oauth-c3-{i:02d}" for i in range(1, n_case3 + 1)]
        + [f"oauth-c2-{i:02d}" for i in range(1, n_case2 + 1)]
    )
    if len(scopes) < len(slugs):
        scopes = scopes + [None] * (len(slugs) - len(scopes))
    for slug, scope in zip(slugs, scopes):
        host = f"{slug}.example"
        if slug.startswith("oauth-c1"):
            token = f"vt-{slug}"
            builder.accessible_plugin(
                slug,
                _auth_oauth(host, scope, verification_token=token),
                [_ok_endpoint(requires_token=True, token=token)],
            )
        elif slug.startswith("oauth-c3"):
            builder.accessible_plugin(slug, _auth_oauth(host, scope), [_ok_endpoint()])
        else:
            builder.accessible_plugin(
                slug,
                _auth_oauth(host, scope),
                [_ok_endpoint(requires_token=True, token=f"secret-{slug}")],
            )


def _paper_scope_assignment() -> list[str | None]:
    """Scopes aligned with the oauth slug order of _add_oauth_population:
    3 case1, 24 case3, 43 case2."""
    case1_scopes = _SCOPES_PROJECT + _SCOPES_EXECUTE                      # 3
    case3_scopes = _SCOPES_READ_WRITE + _SCOPES_OPENAI + _SCOPES_IDENTITY  # 7+6+11 = 24
    case2_scopes: list[str | None] = [None] * 34 + _SCOPES_GLOBAL          # 34+9 = 43
    return list(case1_scopes) + list(case3_scopes) + case2_scopes


def generate_paper_plan(seed: int) -> FixturePlan:
    """Population matching the reference result tables.

    373 accessible (5 irregular manifests + 23 broken APIs + 345 probed),
    case counts 8/74/24/141/98, failure causes 58/66/49, token families
    239/70/34 (+2 user_http), consistency findings 34/8/27, one 17-member
    shared-manifest group, and verdict buckets 104/12/6/19/518 for the
    protected categories.
    """
    b = _PlanBuilder(PROFILE_PAPER_TABLES, seed)

    # 17 listings sharing one manifest on one host; 16 store titles differ
    # from the shared name_for_human (16 of the 34 inconsistent names).
    mixerbox = FixtureSite(host="mixerbox.example", well_known=WK_MANIFEST)
    mixerbox.manifest = _manifest_doc("mixerbox.example", "MixerBox OnePlayer", _AUTH_NONE)
    mixerbox.openapi = _openapi_doc("mixerbox.example", "MixerBox OnePlayer API")
    mixerbox.endpoints = [_ok_endpoint()]
    b.add_site(mixerbox)
    b.add_index_entry("MixerBox OnePlayer", "https://mixerbox.example/legal", "Audit fixture plugin.", "mixerbox.example")
    for variant in _MIXERBOX_VARIANTS:
        b.add_index_entry(f"MixerBox {variant}", "https://mixerbox.example/legal", "Audit fixture plugin.", "mixerbox.example")

    # Rank-gaming pair: "A Digital Pet" is "Digital Pet" behind an article.
    b.accessible_plugin("digital-pet", _AUTH_NONE, [_ok_endpoint()], store_title="Digital Pet")
    b.accessible_plugin("a-digital-pet", _AUTH_NONE, [_ok_endpoint()], store_title="A Digital Pet")

    # Remaining inconsistent names: manifest name drifted from the listing.
    for i in range(1, 19):
        slug = f"name-drift-{i:02d}"
        b.accessible_plugin(slug, _AUTH_NONE, [_ok_endpoint()], manifest_name=_title_from_slug(slug) + " Pro")
    # Different descriptions.
    for i in range(1, 9):
        b.accessible_plugin(
            f"desc-drift-{i:02d}",
            _AUTH_NONE,
            [_ok_endpoint()],
            store_description="Fast lookups for everyday questions.",
            manifest_description="An entirely different capability statement.",
        )
    # Mismatched legal URLs.
    for i in range(1, 28):
        b.accessible_plugin(f"legal-drift-{i:02d}", _AUTH_NONE, [_ok_endpoint()], manifest_legal_path="/terms")
    # Plain open plugins (case 4); the first five also expose a POST route.
    for i in range(1, 70):
        slug = f"open-ok-{i:02d}"
        host = f"{slug}.example"
        endpoints = [_ok_endpoint()]
        openapi: dict | str | None = "default"
        if i <= 5:
            openapi = _openapi_doc(host, f"{_title_from_slug(slug)} API", with_search=True)
            endpoints = [_ok_endpoint(), FixtureEndpoint(path="/api/search", method="POST", body_ok={"results": []})]
        b.accessible_plugin(slug, _AUTH_NONE, endpoints, openapi=openapi)

    # Open APIs that fail anyway (case 5): 49 client errors, 48 rate
    # limited, one exhibiting both causes across two endpoints.
    for i in range(1, 50):
        b.accessible_plugin(f"ce-fail-{i:02d}", _AUTH_NONE, [_fail_endpoint(400)])
    for i in range(1, 49):
        b.accessible_plugin(f"rl-fail-{i:02d}", _AUTH_NONE, [_fail_endpoint(429)])
    b.accessible_plugin(
        "dual-fail-01",
        _AUTH_NONE,
        [_fail_endpoint(400, path="/api/alpha"), _fail_endpoint(429, path="/api/beta")],
        openapi=_dual_openapi("dual-fail-01.example"),
    )

    _add_oauth_population(b, n_case1=3, n_case3=24, n_case2=43, scopes=_paper_scope_assignment())

    # Service-bearer plugins: 5 replayable leaked tokens (case 1), 13
    # strict (401), 16 broken request handling (400).
    for i in range(1, 6):
        slug = f"bearer-c1-{i:02d}"
        token = f"vt-{slug}"
        b.accessible_plugin(slug, _auth_service_bearer(token), [_ok_endpoint(requires_token=True, token=token)])
    for i in range(1, 14):
        slug = f"bearer-c2-la-{i:02d}"
        b.accessible_plugin(slug, _auth_service_bearer(None), [_ok_endpoint(requires_token=True, token=f"secret-{slug}")])
    for i in range(1, 17):
        b.accessible_plugin(f"bearer-c2-ce-{i:02d}", _auth_service_bearer(None), [_fail_endpoint(400)])

    # User-token plugins (outside the three classic families).
    for i in range(1, 3):
        slug = f"user-c2-{i:02d}"
        b.accessible_plugin(slug, _AUTH_USER_BEARER, [_ok_endpoint(requires_token=True, token=f"secret-{slug}")])

    # Irregular manifests (no model description): exposed but not probed.
    for i in range(1, 6):
        b.accessible_plugin(f"irr-manifest-{i:02d}", _AUTH_NONE, [_ok_endpoint()], include_model_description=False)
    # Broken or empty API descriptions: exposed but unprobeable.
    for i in range(1, 21):
        b.accessible_plugin(f"broken-api-{i:02d}", _AUTH_NONE, [], openapi='{"openapi": broken')
    for i in range(1, 4):
        slug = f"empty-api-{i:02d}"
        host = f"{slug}.example"
        empty = _openapi_doc(host, "Empty API")
        empty["paths"] = {}
        b.accessible_plugin(slug, _AUTH_NONE, [], openapi=empty)

    # Hidden redirects: the well-known path 302s to an off-domain page.
    for i in range(1, 105):
        slug = f"redir-{i:03d}"
        host = f"{slug}.example"
        b.add_index_entry(_title_from_slug(slug), f"https://{host}/legal", "Audit fixture plugin.", host)
        b.add_site(
            FixtureSite(host=host, well_known=WK_REDIRECT, redirect_to=f"https://{LANDING_HOST}/welcome")
        )

    # Hosted/protected categories are driven purely by the seed host.
    for i in range(1, 13):
        b.add_index_entry(f"Openai Prot {i:02d}", f"https://chat.openai.com/fixture-prot-{i:02d}")
    for i in range(1, 7):
        b.add_index_entry(f"Gdoc Hosted {i:02d}", f"https://drive.google.com/file/d/fixdoc{i:02d}")
    for i in range(1, 20):
        b.add_index_entry(f"Github Hosted {i:02d}", f"https://github.com/fixdev{i:02d}/plugin")
    for i in range(1, 519):
        host = f"native-{i:03d}.example"
        b.add_index_entry(f"Native {i:03d}", f"https://{host}/legal")

    return b.finish()


def _dual_openapi(host: str) -> dict:
    doc = _openapi_doc(host, "Dual Fail API")
    status = doc["paths"].pop("/status")
    doc["paths"]["/alpha"] = status
    doc["paths"]["/beta"] = json.loads(json.dumps(status))
    return doc


def generate_revisit_plan(seed: int) -> FixturePlan:
    """Remediated population: file leakage 282, 61 inconsistent plugins,
    89/17/3 successful retrievals for the three token families."""
    b = _PlanBuilder(PROFILE_REVISIT, seed)

    for i in range(1, 31):
        slug = f"name-drift-{i:02d}"
        b.accessible_plugin(slug, _AUTH_NONE, [_ok_endpoint()], manifest_name=_title_from_slug(slug) + " Pro")
    for i in range(1, 7):
        b.accessible_plugin(
            f"desc-drift-{i:02d}",
            _AUTH_NONE,
            [_ok_endpoint()],
            store_description="Fast lookups for everyday questions.",
            manifest_description="An entirely different capability statement.",
        )
    for i in range(1, 26):
        b.accessible_plugin(f"legal-drift-{i:02d}", _AUTH_NONE, [_ok_endpoint()], manifest_legal_path="/terms")
    for i in range(1, 29):
        b.accessible_plugin(f"open-ok-{i:02d}", _AUTH_NONE, [_ok_endpoint()])
    for i in range(1, 65):
        b.accessible_plugin(f"ce-fail-{i:02d}", _AUTH_NONE, [_fail_endpoint(400)])
    for i in range(1, 65):
        b.accessible_plugin(f"rl-fail-{i:02d}", _AUTH_NONE, [_fail_endpoint(429)])

    scopes: list[str | None] = ["all", "read+write", "email", "openai", "project"] + [None] * 37
    _add_oauth_population(b, n_case1=2, n_case3=15, n_case2=25, scopes=scopes)

    for i in range(1, 4):
        slug = f"bearer-c1-{i:02d}"
        token = f"vt-{slug}"
        b.accessible_plugin(slug, _auth_service_bearer(token), [_ok_endpoint(requires_token=True, token=token)])
    for i in range(1, 11):
        slug = f"bearer-c2-la-{i:02d}"
        b.accessible_plugin(slug, _auth_service_bearer(None), [_ok_endpoint(requires_token=True, token=f"secret-{slug}")])

    for i in range(1, 11):
        b.accessible_plugin(f"broken-api-{i:02d}", _AUTH_NONE, [], openapi='{"openapi": broken')

    for i in range(1, 21):
        slug = f"redir-{i:03d}"
        host = f"{slug}.example"
        b.add_index_entry(_title_from_slug(slug), f"https://{host}/legal", "Audit fixture plugin.", host)
        b.add_site(FixtureSite(host=host, well_known=WK_REDIRECT, redirect_to=f"https://{LANDING_HOST}/welcome"))
    for i in range(1, 4):
        b.add_index_entry(f"Openai Prot {i:02d}", f"https://chat.openai.com/fixture-prot-{i:02d}")
    b.add_index_entry("Gdoc Hosted 01", "https://drive.google.com/file/d/fixdoc01")
    for i in range(1, 5):
        b.add_index_entry(f"Github Hosted {i:02d}", f"https://github.com/fixdev{i:02d}/plugin")
    for i in range(1, 61):
        host = f"native-{i:03d}.example"
        b.add_index_entry(f"Native {i:03d}", f"https://{host}/legal")

    return b.finish()


def generate_plan(profile: str, seed: int) -> FixturePlan:
    if profile == PROFILE_PAPER_TABLES:
        return generate_paper_plan(seed)
    if profile == PROFILE_REVISIT:
        return generate_revisit_plan(seed)
    raise ValueError(f"unknown fixture profile: {profile!r}")


# --------------------------------------------------------------------------
# Server


class FixtureServer:
    def __init__(self, plan: FixturePlan, port: int = 0):
        self.plan = plan
        self._counters: dict[tuple[str, str, str], int] = {}
        self._lock = threading.Lock()
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.httpd.daemon_threads = True
        self.port = self.httpd.server_address[1]
        self.base_url = f"http://127.0.0.1:{self.port}"
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def start(self) -> "FixtureServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self._thread.join(timeout=5)

    def wait(self) -> None:
        self._thread.join()

    def bump_counter(self, host: str, path: str, method: str) -> int:
        with self._lock:
            key = (host, path, method)
            self._counters[key] = self._counters.get(key, 0) + 1
            return self._counters[key]


def serve_fixtures(plan: FixturePlan, port: int = 0) -> FixtureServer:
    """Start the fixture server on 127.0.0.1; raises OSError if the port is
    busy. Returns a handle with .base_url and .stop()."""
    return FixtureServer(plan, port).start()


def _json_bytes(doc: object) -> bytes:
    return json.dumps(doc, indent=1, sort_keys=True).encode("utf-8")


def _make_handler(server: FixtureServer):
    plan = server.plan

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # noqa: ARG002 - silence stdlib logging
            pass

        def _respond(self, status: int, body: bytes = b"", content_type: str = "application/json", headers: dict | None = None):
            self.send_response(status)
            for key, value in (headers or {}).items():
                self.send_header(key, value)
            if body:
                self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            if body:
                self.wfile.write(body)

        def _drain_body(self) -> None:
            length = int(self.headers.get("Content-Length", 0) or 0)
            if length:
                self.rfile.read(length)

        def _handle(self, method: str) -> None:
            self._drain_body()
            raw_path = self.path.split("?", 1)[0]
            if raw_path == "/index.ndjson":
                self._respond(200, index_ndjson(plan).encode("utf-8"), "application/x-ndjson")
                return
            parts = raw_path.lstrip("/").split("/", 1)
            host = parts[0]
            rest = "/" + (parts[1] if len(parts) > 1 else "")

            site = plan.sites.get(host)
            if site is not None:
                self._serve_site(site, method, rest)
                return
            if host == LANDING_HOST:
                self._respond(200, _LANDING_BODY, "text/html")
                return
            denial = _builtin_denial(host)
            if denial is not None:
                self._respond(denial, _json_bytes({"error": "not available"}))
                return
            self._respond(404, _json_bytes({"error": "no such host"}))

        def _serve_site(self, site: FixtureSite, method: str, rest: str) -> None:
            if site.host == LANDING_HOST:
                self._respond(200, _LANDING_BODY, "text/html")
                return
            if rest in ("/.well-known/ai-plugin.json", "/.well-known/", "/.well-known"):
                if site.well_known == WK_MANIFEST:
                    if rest == "/.well-known/ai-plugin.json":
                        self._respond(200, _json_bytes(site.manifest))
                    else:
                        self._respond(404, _json_bytes({"error": "not found"}))
                elif site.well_known == WK_REDIRECT:
                    self._respond(302, b"", headers={"Location": site.redirect_to or f"https://{LANDING_HOST}/"})
                elif site.well_known == WK_DENIED_403:
                    self._respond(403, _json_bytes({"error": "forbidden"}))
                else:
                    self._respond(404, _json_bytes({"error": "not found"}))
                return
            if rest == "/openapi.json":
                if site.openapi is not None:
                    self._respond(200, _json_bytes(site.openapi))
                elif site.openapi_raw is not None:
                    self._respond(200, site.openapi_raw.encode("utf-8"), "text/plain")
                else:
                    self._respond(404, _json_bytes({"error": "not found"}))
                return
            for endpoint in site.endpoints:
                if endpoint.path == rest and endpoint.method == method:
                    self._serve_endpoint(site, endpoint)
                    return
            self._respond(404, _json_bytes({"error": "not found"}))

        def _serve_endpoint(self, site: FixtureSite, endpoint: FixtureEndpoint) -> None:
            count = server.bump_counter(site.host, endpoint.path, endpoint.method)
            if endpoint.rate_limit_after is not None and count > endpoint.rate_limit_after:
                self._respond(
                    429,
                    _json_bytes({"error": "rate limit exceeded"}),
                    headers={"Retry-After": "1"},
                )
                return
            if endpoint.requires_token:
                presented = self.headers.get("Authorization", "")
                if endpoint.required_token and presented == f"Bearer {endpoint.required_token}":
                    self._respond(endpoint.status_ok, _json_bytes(endpoint.body_ok or {"status": "ok"}))
                else:
                    self._respond(endpoint.fail_status, _json_bytes({"error": "authorization required"}))
                return
            status = endpoint.status_ok
            headers = {"Retry-After": "1"} if status == 429 else None
            self._respond(status, _json_bytes(endpoint.body_ok or {"status": "ok"}), headers=headers)

        def do_GET(self):
            self._handle("GET")

        def do_POST(self):
            self._handle("POST")

        def do_PUT(self):
            self._handle("PUT")

        def do_DELETE(self):
            self._handle("DELETE")

    return Handler
