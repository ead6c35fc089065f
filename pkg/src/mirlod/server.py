"""Linked data front end: 303 content negotiation, RDF and HTML documents, query endpoint."""

from __future__ import annotations

import html
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, quote, unquote, urlsplit

from .history import NotAliveAtVersion
from .mapping import UnknownResource, VirtualGraph
from .query import QueryError, evaluate, parse_query, serialize_results
from .rdf import IRI, STANDARD_PREFIXES, serialize_ntriples, serialize_turtle

log = logging.getLogger("mirlod.server")

TURTLE = "text/turtle"
NTRIPLES = "application/n-triples"
HTML = "text/html"
JSON_RESULTS = "application/sparql-results+json"
TSV_RESULTS = "text/tab-separated-values"

RDF_TYPES = (TURTLE, NTRIPLES, "application/rdf+xml", "application/ld+json", "text/n3")
HTML_TYPES = (HTML, "application/xhtml+xml")
DOCUMENT_KINDS = ("resource", "data", "page")


@dataclass(frozen=True)
class RouteTarget:
    kind: str                       # resource | data | page | sparql | root | notfound
    classmap: Optional[str] = None  # first path segment under /resource, e.g. "hairpins"
    key: Optional[str] = None
    version: Optional[str] = None
    change: Optional[str] = None    # event slug for change resources
    raw: Optional[str] = field(default=None, compare=False)  # path below the kind, as requested

    @property
    def relative(self) -> str:
        """Path of the described resource below ``/resource/``."""
        if self.raw is not None:
            return self.raw
        parts = [self.classmap, self.key]
        if self.version is not None:
            parts.append(self.version)
        if self.change is not None:
            parts.append(self.change)
        return "/".join(quote(p, safe=",;:@!$&'()*+=") for p in parts)


NOT_FOUND = RouteTarget("notfound")


def route(path: str) -> RouteTarget:
    """Map a request path (without base prefix or query string) to a target."""
    path = urlsplit(path).path
    if path in ("", "/"):
        return RouteTarget("root")
    if path.rstrip("/") == "/sparql":
        return RouteTarget("sparql")
    segments = path.strip("/").split("/")
    if len(segments) < 3 or segments[0] not in DOCUMENT_KINDS or any(s == "" for s in segments):
        return NOT_FOUND
    kind, cm, *rest = segments
    raw = "/".join([cm] + rest)
    rest = [unquote(s) for s in rest]
    if cm == "changes":
        if len(rest) != 3:
            return NOT_FOUND
        return RouteTarget(kind, cm, rest[0], rest[1], rest[2], raw=raw)
    if len(rest) == 1:
        return RouteTarget(kind, cm, rest[0], raw=raw)
    if len(rest) == 2:
        return RouteTarget(kind, cm, rest[0], rest[1], raw=raw)
    return NOT_FOUND


def parse_accept(header: Optional[str]) -> list:
    """``[(media_range, q)]`` in header order; malformed q-values count as 1."""
    out = []
    for part in (header or "").split(","):
        bits = [b.strip() for b in part.split(";")]
        if not bits[0]:
            continue
        q = 1.0
        for b in bits[1:]:
            if b.startswith("q="):
                try:
                    q = max(0.0, min(1.0, float(b[2:])))
                except ValueError:
                    pass
        out.append((bits[0].lower(), q))
    return out


def _quality(accept, media_type):
    """Highest q the Accept list grants ``media_type``, preferring the most specific range."""
    major = media_type.split("/")[0]
    best = None
    for rng, q in accept:
        if rng == media_type:
            spec = 3
        elif rng == major + "/*":
            spec = 2
        elif rng == "*/*":
            spec = 1
        else:
            continue
        if best is None or spec > best[0] or (spec == best[0] and q > best[1]):
            best = (spec, q)
    return best[1] if best else 0.0


def negotiate(header: Optional[str], offers) -> Optional[str]:
    """Best of ``offers`` for an Accept header; first offer wins ties and a missing header."""
    accept = parse_accept(header)
    if not accept:
        return offers[0]
    scored = [(_quality(accept, o), -i, o) for i, o in enumerate(offers)]
    q, _, offer = max(scored)
    return offer if q > 0 else None


def prefers_html(header: Optional[str]) -> bool:
    accept = parse_accept(header)
    if not accept:
        return False
    html_q = max(_quality(accept, t) for t in HTML_TYPES)
    rdf_q = max(_quality(accept, t) for t in RDF_TYPES)
    return html_q > rdf_q


def serialize_graph(triples, fmt: str = "turtle", prefixes: Optional[dict] = None) -> bytes:
    if fmt == "ntriples":
        return serialize_ntriples(triples).encode("utf-8")
    if fmt == "turtle":
        return serialize_turtle(triples, prefixes).encode("utf-8")
    raise ValueError(f"unknown graph format {fmt!r}")


@dataclass
class Response:
    status: int
    headers: dict = field(default_factory=dict)
    body: bytes = b""

    def header(self, name):
        for k, v in self.headers.items():
            if k.lower() == name.lower():
                return v
        return None


class LodApp:
    """Request handling over an immutable :class:`VirtualGraph`; safe to share between threads."""

    def __init__(self, graph: VirtualGraph, build_hash: str = ""):
        self.graph = graph
        self.build_hash = build_hash
        self.base = graph.base
        self.base_path = urlsplit(self.base).path.rstrip("/")
        self.prefixes = dict(STANDARD_PREFIXES, diana=graph.spec.diana)
        self.etag = f'"{build_hash}"' if build_hash else None

    # -- helpers ------------------------------------------------------------

    def _text(self, status, message, extra=None):
        headers = {"Content-Type": "text/plain; charset=utf-8"}
        headers.update(extra or {})
        return Response(status, headers, (message + "\n").encode("utf-8"))

    def _ok(self, body, content_type, request_headers):
        headers = {"Content-Type": content_type, "Vary": "Accept"}
        if self.etag:
            headers["ETag"] = self.etag
            if request_headers.get("if-none-match") in (self.etag, "*"):
                return Response(304, headers)
        return Response(200, headers, body)

    def url(self, kind, target: RouteTarget) -> str:
        return f"{self.base}/{kind}/{target.relative}"

    def _describe(self, target: RouteTarget):
        """``(triples, None)`` or ``(None, error_response)`` for a resource target."""
        uri = self.url("resource", target)
        g = self.graph
        try:
            return g.describe(uri), None
        except NotAliveAtVersion:
            pass
        except UnknownResource:
            return None, self._text(404, f"no such resource: {uri}")
        gone = self._gone(target)
        if gone is not None:
            return None, gone
        return None, self._text(404, f"{target.key} does not exist at this release: {uri}")

    def _gone(self, target: RouteTarget) -> Optional[Response]:
        """410 for a hairpin that was deleted with a forward link, asked after its deletion."""
        h = self.graph.history
        if h is None or not h.knows(target.key):
            return None
        rec = h.terminal_record(target.key)
        if rec is None or rec.change != "FW":
            return None
        if target.version is not None and h.ordinal(target.version) <= rec.first_appearance:
            return None
        forward = h.forward_chain(target.key)
        headers = {}
        body = f"{target.key} was replaced in release {h.registry.label(rec.first_appearance)}"
        if forward:
            link = self.graph.entity_iri(forward, "hairpin").value
            headers["Link"] = f'<{link}>; rel="successor-version"'
            body += f"; see {link}"
        return self._text(410, body, headers)

    # -- routes -------------------------------------------------------------

    def handle(self, method: str, path: str, headers: Optional[dict] = None, body: bytes = b"") -> Response:
        headers = {k.lower(): v for k, v in (headers or {}).items()}
        split = urlsplit(path)
        local = split.path
        if self.base_path:
            if local != self.base_path and not local.startswith(self.base_path + "/"):
                return self._text(404, "not found")
            local = local[len(self.base_path):]
        target = route(local)
        if target.kind == "sparql":
            return self._sparql(method, split.query, headers, body)
        if method not in ("GET", "HEAD"):
            return self._text(405, "method not allowed", {"Allow": "GET, HEAD"})
        if target.kind == "root":
            return self._ok(self._root_page(), "text/html; charset=utf-8", headers)
        if target.kind == "notfound":
            return self._text(404, "not found")
        triples, error = self._describe(target)
        if error is not None:
            return error
        if target.kind == "resource":
            kind = "page" if prefers_html(headers.get("accept")) else "data"
            return Response(303, {"Location": self.url(kind, target), "Vary": "Accept"})
        if target.kind == "data":
            fmt = negotiate(headers.get("accept"), (TURTLE, NTRIPLES)) or TURTLE
            if fmt == NTRIPLES:
                return self._ok(serialize_graph(triples, "ntriples"), NTRIPLES + "; charset=utf-8", headers)
            return self._ok(serialize_graph(triples, "turtle", self.prefixes),
                            TURTLE + "; charset=utf-8", headers)
        return self._ok(self._page(self.url("resource", target), triples),
                        "text/html; charset=utf-8", headers)

    def _sparql(self, method, query_string, headers, body):
        if method == "GET":
            params = parse_qs(query_string)
        elif method == "POST":
            ctype = (headers.get("content-type") or "").split(";")[0].strip().lower()
            if ctype == "application/sparql-query":
                params = {"query": [body.decode("utf-8", errors="replace")]}
            else:
                params = parse_qs(body.decode("utf-8", errors="replace"))
        else:
            return self._text(405, "method not allowed", {"Allow": "GET, POST"})
        texts = params.get("query")
        if not texts:
            return self._text(400, "missing 'query' parameter")
        try:
            q = parse_query(texts[0], {"diana": self.graph.spec.diana})
        except QueryError as exc:
            return self._text(400, f"query error: {exc}")
        rows = evaluate(q, self.graph)
        fmt = negotiate(headers.get("accept"), (JSON_RESULTS, TSV_RESULTS, "application/json")) or JSON_RESULTS
        if fmt == TSV_RESULTS:
            return Response(200, {"Content-Type": TSV_RESULTS + "; charset=utf-8"},
                            serialize_results(rows, q.select_vars, "tsv"))
        return Response(200, {"Content-Type": JSON_RESULTS},
                        serialize_results(rows, q.select_vars, "json"))

    # -- HTML ---------------------------------------------------------------

    def _href(self, iri: str) -> str:
        rb = self.graph.resource_base
        if iri.startswith(rb):
            return f"{self.base}/page/{iri[len(rb):]}"
        return iri

    def _cell(self, term):
        if isinstance(term, IRI):
            return f'<a href="{html.escape(self._href(term.value))}">{html.escape(term.value)}</a>'
        text = html.escape(term.value)
        if getattr(term, "lang", None):
            text += f" <small>@{html.escape(term.lang)}</small>"
        return text

    def _page(self, uri, triples) -> bytes:
        rows = []
        for t in sorted(triples, key=lambda t: (t.predicate.value, t.object.n3())):
            rows.append(f"<tr><td>{self._cell(t.predicate)}</td><td>{self._cell(t.object)}</td></tr>")
        title = html.escape(uri)
        doc = (
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
            f"<title>{title}</title></head>\n<body>\n<h1>{title}</h1>\n"
            f'<p><a href="{html.escape(uri.replace("/resource/", "/data/", 1))}">RDF</a></p>\n'
            "<table>\n<tr><th>property</th><th>value</th></tr>\n" + "\n".join(rows) +
            "\n</table>\n</body></html>\n"
        )
        return doc.encode("utf-8")

    def _root_page(self) -> bytes:
        items = []
        for cm in self.graph.spec.class_maps.values():
            items.append(f"<li>{html.escape(cm.label or cm.name)}: "
                         f"<code>{html.escape(self.graph.resource_base + cm.uri_pattern.template)}</code></li>")
        h = self.graph.history
        releases = ", ".join(h.registry.labels) if h else ""
        doc = (
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>miRNA linked data</title></head>\n"
            "<body>\n<h1>miRNA linked data</h1>\n<ul>\n" + "\n".join(items) + "\n</ul>\n"
            f"<p>Releases: {html.escape(releases)}</p>\n"
            f'<p>Query endpoint: <a href="{html.escape(self.base)}/sparql">{html.escape(self.base)}/sparql</a></p>\n'
            "</body></html>\n"
        )
        return doc.encode("utf-8")


# ---------------------------------------------------------------------------
# HTTP binding


def _handler_class(app: LodApp):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "mirlod"

        def _serve(self, method):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            try:
                resp = app.handle(method, self.path, dict(self.headers.items()), body)
            except Exception:  # keep serving; report the failure to the client
                log.exception("error handling %s %s", method, self.path)
                resp = Response(500, {"Content-Type": "text/plain"}, b"internal error\n")
            self.send_response(resp.status)
            for k, v in resp.headers.items():
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            if method != "HEAD":
                self.wfile.write(resp.body)

        def do_GET(self):
            self._serve("GET")

        def do_HEAD(self):
            self._serve("HEAD")

        def do_POST(self):
            self._serve("POST")

        def do_PUT(self):
            self._serve("PUT")

        def do_DELETE(self):
            self._serve("DELETE")

        def log_message(self, fmt, *args):
            log.info("%s %s", self.address_string(), fmt % args)

    return Handler


class LodServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, app: LodApp):
        super().__init__(address, _handler_class(app))
        self.app = app


def start_background(app: LodApp, host="127.0.0.1", port=0):
    """Serve on a daemon thread; returns ``(server, thread)``. Used by tests."""
    server = LodServer((host, port), app)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
