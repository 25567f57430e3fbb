"""Polite HTTP fetch executor shared by the discovery and probe layers.

Redirects are followed manually (up to 5 hops) so the full chain is
recorded; retries with exponential backoff apply to transport errors and
5xx responses only. Politeness (minimum delay between requests to the same
host) is keyed to the *logical* host of the original URL, so an offline run
with --base-url rewriting still schedules like a live one.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from urllib.parse import urlsplit, urljoin

import requests

from .urlnorm import host_of

MAX_REDIRECTS = 5
BODY_PREFIX_LIMIT = 256 * 1024

TRANSPORT_ERROR = 0  # http_status marker for failures below HTTP


@dataclass(frozen=True)
class FetchResult:
    url: str                      # requested URL (original space)
    final_url: str                # after redirects (original space)
    status: int                   # TRANSPORT_ERROR (0) when no response
    headers: dict[str, str] = field(default_factory=dict)
    body: bytes = b""
    content_type: str = ""
    redirect_chain: tuple[str, ...] = ()
    error: str | None = None
    attempts: int = 1

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300


def rewrite_to_base(url: str, base_url: str) -> str:
    """Map an original-space URL onto the fixture server.

    https://host/path?q -> {base_url}/host/path?q ; the logical host rides
    in the first path segment so the fixture can route per virtual host.
    """
    parts = urlsplit(url)
    path = parts.path or "/"
    query = f"?{parts.query}" if parts.query else ""
    return f"{base_url.rstrip('/')}/{parts.netloc}{path}{query}"


class Fetcher:
    """Thread-safe fetch executor with per-host politeness and a global cap."""

    def __init__(
        self,
        max_concurrency: int = 8,
        per_host_delay_ms: int = 500,
        timeout_ms: int = 10000,
        retries: int = 2,
        base_url: str | None = None,
        log_fn=None,
    ):
        self.max_concurrency = max(1, int(max_concurrency))
        self.per_host_delay = max(0, int(per_host_delay_ms)) / 1000.0
        self.timeout = max(1, int(timeout_ms)) / 1000.0
        self.retries = max(0, int(retries))
        self.base_url = base_url.rstrip("/") if base_url else None
        self._log_fn = log_fn
        self._host_locks: dict[str, threading.Lock] = {}
        self._host_last: dict[str, float] = {}
        self._registry_lock = threading.Lock()
        self._session_local = threading.local()

    def _session(self) -> requests.Session:
        session = getattr(self._session_local, "session", None)
        if session is None:
            session = requests.Session()
            adapter = requests.adapters.HTTPAdapter(
                pool_connections=4, pool_maxsize=max(10, self.max_concurrency)
            )
            session.mount("http://", adapter)
            session.mount("https://", adapter)
            self._session_local.session = session
        return session

    def _host_lock(self, host: str) -> threading.Lock:
        with self._registry_lock:
            return self._host_locks.setdefault(host, threading.Lock())

    def _transport_url(self, url: str) -> str:
        if self.base_url:
            return rewrite_to_base(url, self.base_url)
        return url

    def _single_request(self, method: str, url: str, headers: dict[str, str], body: bytes | None):
        # Per-host serial queue: the lock spans the request so one logical
        # host never sees overlapping traffic from this process.
        host = host_of(url)
        with self._host_lock(host):
            last = self._host_last.get(host, 0.0)
            wait = last + self.per_host_delay - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                return self._session().request(
                    method,
                    self._transport_url(url),
                    headers=headers,
                    data=body,
                    timeout=self.timeout,
                    allow_redirects=False,
                    stream=True,
                )
            finally:
                self._host_last[host] = time.monotonic()

    def fetch(
        self,
        url: str,
        method: str = "GET",
        headers: dict[str, str] | None = None,
        body: bytes | None = None,
        follow_redirects: bool = True,
    ) -> FetchResult:
        """Fetch one URL, following redirects manually and retrying politely."""
        headers = dict(headers or {})
        headers.setdefault("User-Agent", "plugin-store-audit/0.1")
        chain: list[str] = []
        current = url
        attempts_total = 0
        last_error = None

        for hop in range(MAX_REDIRECTS + 1):
            response = None
            for attempt in range(self.retries + 1):
                attempts_total += 1
                try:
                    response = self._single_request(method, current, headers, body)
                except requests.RequestException as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                    response = None
                if response is not None and response.status_code < 500:
                    break
                if response is not None:
                    last_error = f"server error {response.status_code}"
                    if attempt >= self.retries:
                        break
                    response.close()
                    response = None
                if attempt < self.retries:
                    time.sleep(min(2.0, 0.2 * (2 ** attempt)))
            if response is None:
                result = FetchResult(
                    url=url,
                    final_url=current,
                    status=TRANSPORT_ERROR,
                    redirect_chain=tuple(chain),
                    error=last_error or "transport failure",
                    attempts=attempts_total,
                )
                self._log(method, result)
                return result

            status = response.status_code
            location = response.headers.get("Location")
            if follow_redirects and 300 <= status < 400 and location and hop < MAX_REDIRECTS:
                chain.append(current)
                current = urljoin(current, location)
                response.close()
                continue

            body_bytes = response.raw.read(BODY_PREFIX_LIMIT, decode_content=True) if response.raw else b""
            result = FetchResult(
                url=url,
                final_url=current,
                status=status,
                headers={k: v for k, v in response.headers.items()},
                body=body_bytes,
                content_type=response.headers.get("Content-Type", ""),
                redirect_chain=tuple(chain),
                attempts=attempts_total,
            )
            response.close()
            self._log(method, result)
            return result

        result = FetchResult(
            url=url,
            final_url=current,
            status=TRANSPORT_ERROR,
            redirect_chain=tuple(chain),
            error="redirect limit exceeded",
            attempts=attempts_total,
        )
        self._log(method, result)
        return result

    def _log(self, method: str, result: FetchResult) -> None:
        if self._log_fn is not None:
            self._log_fn(method, result)

    def map_concurrent(self, func, items):
        """Run func over items with the configured global concurrency cap."""
        if not items:
            return []
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            return list(pool.map(func, items))
