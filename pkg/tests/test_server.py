import json
import re
import urllib.error
import urllib.request

import pytest
from hypothesis import given, settings, strategies as st

from helpers import seq, tables_for, timeline
from mirlod.generator import MIRBASE_LABELS
from mirlod.history import build_history, snapshot_at
from mirlod.mapping import VirtualGraph, default_mapping_text, parse_mapping
from mirlod.query import parse_results
from mirlod.rdf import IRI, Literal, Triple, parse_ntriples, parse_turtle
from mirlod.server import (
    NOT_FOUND, LodApp, RouteTarget, negotiate, prefers_html, route, serialize_graph, start_background,
)

LABELS = MIRBASE_LABELS[:20]
X_HAIRPINS_QUERY = """SELECT ?h ?s WHERE {
  ?h rdf:type diana:Hairpin.
  ?h diana:sequence ?s.
  ?h diana:chromosome "X".
  ?h diana:label "now". } LIMIT 10"""
REMOVED_AT_1_3_QUERY = """SELECT ?h ?d ?c WHERE {
 ?h rdf:type diana:Hairpin.
 {{?h diana:changeDelete ?d.} UNION {?h diana:changeForward ?c.}}
 ?h diana:version "1.3". } LIMIT 10"""


@pytest.fixture(scope="module")
def app():
    x_ids = [f"MI{i:07d}" for i in range(100, 112)]
    doomed = [f"MI{i:07d}" for i in range(200, 205)]

    def first(s):
        s.new_hairpin("MI0000044", "hsa-mir-44", seq(44))
        for i, mid in enumerate(x_ids + doomed):
            s.new_hairpin(mid, f"hsa-mir-{mid[-3:]}", seq(i))
        s.new_mature("MIMAT0010008", "hsa-miR-44-5p", seq(8, 22), "MI0000044")

    def at_1_3(s):
        for mid in doomed[:3]:
            s.delete(mid, cause="not a miRNA")
        for mid in doomed[3:]:
            s.delete(mid, forward_to="MI0000044", cause="duplicate entry")

    edits = {1: first, 4: at_1_3, 18: lambda s: s.reseq("MI0000044", seq(4444))}
    releases, _ = timeline(len(LABELS), edits, LABELS)
    h = build_history(releases)
    x = set(x_ids)
    tables = tables_for(snapshot_at(h, None, h.current), lambda mid: "X" if mid in x else "1")
    g = VirtualGraph(parse_mapping(default_mapping_text()), tables, h)
    return LodApp(g, "abc123")


# routing

def test_route_versioned():
    t = route("/resource/hairpins/MI0000044/8.0")
    assert t == RouteTarget("resource", "hairpins", "MI0000044", "8.0")


def test_route_current():
    assert route("/resource/matures/MIMAT0010008") == RouteTarget("resource", "matures", "MIMAT0010008")


@pytest.mark.parametrize("path", ["/nonsense", "/resource/hairpins", "/data/a/b/c/d", "/resource/changes/a/b"])
def test_route_not_found(path):
    assert route(path) == NOT_FOUND


def test_route_change_resource():
    t = route("/data/changes/MI0000200/1.3/DEL")
    assert (t.kind, t.key, t.version, t.change) == ("data", "MI0000200", "1.3", "DEL")


# dereferencing

def test_html_gets_page_redirect(app):
    r = app.handle("GET", "/resource/hairpins/MI0000044/8.0", {"Accept": "text/html"})
    assert r.status == 303
    assert r.header("Location") == app.base + "/page/hairpins/MI0000044/8.0"


def test_rdf_gets_data_redirect(app):
    r = app.handle("GET", "/resource/hairpins/MI0000044/8.0", {"Accept": "text/turtle"})
    assert r.header("Location") == app.base + "/data/hairpins/MI0000044/8.0"


def test_unknown_data_is_404(app):
    assert app.handle("GET", "/data/hairpins/UNKNOWN").status == 404
    assert app.handle("GET", "/resource/hairpins/MI0009999").status == 404


def test_turtle_matches_versioned_triples(app):
    r = app.handle("GET", "/data/hairpins/MI0000044/8.0", {"Accept": "text/turtle"})
    assert r.status == 200 and r.header("Content-Type").startswith("text/turtle")
    uri = app.graph.resource_base + "hairpins/MI0000044/8.0"
    assert set(parse_turtle(r.body.decode())) == set(app.graph.versioned_triples(uri))


def test_ntriples_on_request(app):
    r = app.handle("GET", "/data/matures/MIMAT0010008", {"Accept": "application/n-triples"})
    uri = app.graph.resource_base + "matures/MIMAT0010008"
    assert set(parse_ntriples(r.body.decode())) == set(app.graph.triples_for_resource(uri))


def test_forwarded_hairpin_is_gone(app):
    r = app.handle("GET", "/resource/hairpins/MI0000203")
    assert r.status == 410
    assert r.header("Link") == f'<{app.graph.resource_base}hairpins/MI0000044>; rel="successor-version"'
    assert app.handle("GET", "/resource/hairpins/MI0000203/1.4").status == 410
    # the tombstone version and earlier ones still resolve
    assert app.handle("GET", "/resource/hairpins/MI0000203/1.3").status == 303
    assert app.handle("GET", "/resource/hairpins/MI0000203/1.2").status == 303


def test_deleted_without_forward_is_404(app):
    assert app.handle("GET", "/resource/hairpins/MI0000200").status == 404


def test_change_resource(app):
    r = app.handle("GET", "/data/changes/MI0000203/1.3/FW", {"Accept": "text/turtle"})
    triples = parse_turtle(r.body.decode())
    assert Literal("duplicate entry") in {t.object for t in triples}


def test_etag_and_conditional_get(app):
    r = app.handle("GET", "/data/hairpins/MI0000044")
    assert r.header("ETag") == '"abc123"'
    again = app.handle("GET", "/data/hairpins/MI0000044", {"If-None-Match": '"abc123"'})
    assert again.status == 304 and again.body == b""


def test_method_not_allowed(app):
    r = app.handle("DELETE", "/resource/hairpins/MI0000044")
    assert r.status == 405 and r.header("Allow") == "GET, HEAD"
    assert app.handle("PUT", "/sparql").status == 405


def test_root_page(app):
    r = app.handle("GET", "/")
    assert r.status == 200 and b"/sparql" in r.body


accept_headers = st.lists(
    st.tuples(st.sampled_from(["text/html", "text/turtle", "application/xhtml+xml", "*/*", "text/*",
                               "application/n-triples", "image/png", "application/json", "garbage"]),
              st.one_of(st.none(), st.floats(0, 1).map(lambda q: round(q, 2)), st.just("bad"))),
    max_size=5,
).map(lambda items: ", ".join(m if q is None else f"{m};q={q}" for m, q in items))


@settings(max_examples=200, deadline=None)
@given(st.one_of(st.none(), accept_headers))
def test_negotiation_is_total(app, header):
    r = app.handle("GET", "/resource/hairpins/MI0000044", {"Accept": header} if header is not None else {})
    assert r.status == 303
    location = r.header("Location")
    assert location in (app.base + "/data/hairpins/MI0000044", app.base + "/page/hairpins/MI0000044")
    assert location.endswith("/page/hairpins/MI0000044") == prefers_html(header)


def test_negotiate_picks_highest_quality():
    assert negotiate("text/turtle;q=0.5, application/n-triples", ("text/turtle", "application/n-triples")) == \
        "application/n-triples"
    assert negotiate(None, ("text/turtle", "application/n-triples")) == "text/turtle"
    assert negotiate("image/png", ("text/turtle",)) is None


def test_page_navigation_reaches_current(app):
    path = "/page/hairpins/MI0000044/1.0"
    visited = []
    while path:
        r = app.handle("GET", path)
        assert r.status == 200
        visited.append(path.rsplit("/", 1)[1])
        m = re.search(r'nextVersion</a></td><td><a href="([^"]+)"', r.body.decode())
        path = m.group(1)[len(app.base):] if m else None
    assert visited == list(LABELS)


# sparql

def test_post_x_hairpins_query(app):
    r = app.handle("POST", "/sparql", {"Content-Type": "application/sparql-query"}, X_HAIRPINS_QUERY.encode())
    assert r.status == 200
    variables, rows = parse_results(r.body, "json")
    assert variables == ["h", "s"]
    assert len(rows) == 10
    assert all(set(row) == {"h", "s"} for row in rows)


def test_removed_query_counts_deletions_and_forwards(app):
    body = "query=" + urllib.request.quote(REMOVED_AT_1_3_QUERY)
    r = app.handle("POST", "/sparql", {"Content-Type": "application/x-www-form-urlencoded"}, body.encode())
    _, rows = parse_results(r.body, "json")
    assert len(rows) == 5
    assert sum("d" in row for row in rows) == 3 and sum("c" in row for row in rows) == 2


def test_get_without_query(app):
    assert app.handle("GET", "/sparql").status == 400


def test_bad_query_is_400(app):
    r = app.handle("GET", "/sparql?query=" + urllib.request.quote("SELECT ?x WHERE { FILTER(?x) }"))
    assert r.status == 400


def test_tsv_results(app):
    r = app.handle("GET", "/sparql?query=" + urllib.request.quote(X_HAIRPINS_QUERY),
                   {"Accept": "text/tab-separated-values"})
    variables, rows = parse_results(r.body, "tsv")
    assert variables == ["h", "s"] and len(rows) == 10


# graph serialization

def test_empty_graph_serialization():
    assert serialize_graph([], "ntriples") == b""


def test_single_triple_escaping():
    t = Triple(IRI("http://x.test/s"), IRI("http://x.test/p"), Literal('a "quoted"\nline'))
    assert serialize_graph([t], "ntriples") == \
        b'<http://x.test/s> <http://x.test/p> "a \\"quoted\\"\\nline" .\n'


def test_generated_graph_round_trip(app):
    triples = list(app.graph.enumerate_all("all"))
    assert set(parse_ntriples(serialize_graph(triples, "ntriples").decode())) == set(triples)
    assert set(parse_turtle(serialize_graph(triples, "turtle", app.prefixes).decode())) == set(triples)


# over a socket

def test_real_http(app):
    server, thread = start_background(app)
    try:
        port = server.server_address[1]

        class NoRedirect(urllib.request.HTTPRedirectHandler):
            def redirect_request(self, *args, **kwargs):
                return None

        opener = urllib.request.build_opener(NoRedirect)
        req = urllib.request.Request(f"http://127.0.0.1:{port}/resource/hairpins/MI0000044",
                                     headers={"Accept": "text/turtle"})
        with pytest.raises(urllib.error.HTTPError) as err:
            opener.open(req)
        assert err.value.code == 303
        assert err.value.headers["Location"].endswith("/data/hairpins/MI0000044")
        with urllib.request.urlopen(f"http://127.0.0.1:{port}/sparql?query="
                                    + urllib.request.quote(X_HAIRPINS_QUERY)) as resp:
            assert len(json.loads(resp.read())["results"]["bindings"]) == 10
    finally:
        server.shutdown()
        server.server_close()
