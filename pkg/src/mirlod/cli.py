"""Command line: build, validate, export, serve, gen."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import signal
import sys
import threading
from dataclasses import dataclass
from typing import Optional

from . import __version__
from .flatfile import FlatFileError
from .generator import GeneratorError, generate, write_corpus
from .history import (
    DIFF_FILE, History, ReplayError, build_history, dump_events, dump_families, dump_hairpin_history,
    dump_mature_history, load_history, read_release, snapshot_at,
)
from .mapping import (
    DEFAULT_BASE, MappingError, MappingSpec, VirtualGraph, default_mapping_text, parse_mapping,
    parse_sameas,
)
from .rdf import RdfSyntaxError, STANDARD_PREFIXES, serialize_turtle
from .versionstore import SCHEMAS, StoreError, TableSet, dump_versions, load_tables, load_versions, validate

log = logging.getLogger("mirlod")

HISTORY_FILES = {
    "hairpins_history.tsv": dump_hairpin_history,
    "matures_history.tsv": dump_mature_history,
    "events.tsv": dump_events,
    "families.tsv": dump_families,
}
MANIFEST = "manifest.json"
SCOPES = ("current", "versioned", "all")
FORMATS = ("ntriples", "turtle")


class CliError(Exception):
    """Reported as ``error: <message>`` with exit status 1."""


# ---------------------------------------------------------------------------
# Inputs


def _locate(release_dir, entity_id) -> str:
    """``path:line`` of ``entity_id`` in a release's diff file, or the path alone."""
    path = os.path.join(release_dir, DIFF_FILE)
    if entity_id and os.path.isfile(path):
        with open(path, encoding="utf-8", errors="replace") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.split(" ", 1)[0] == entity_id:
                    return f"{path}:{lineno}"
    return path


def read_inputs(releases_dir, tables_dir, mapping_file=None, sameas_file=None):
    """Parse and cross-check everything a build needs; raises CliError on the first problem."""
    try:
        registry = load_versions(os.path.join(releases_dir, "versions.txt"))
    except StoreError as exc:
        raise CliError(str(exc)) from None
    if not len(registry):
        raise CliError(f"{os.path.join(releases_dir, 'versions.txt')}: no releases listed")
    releases = []
    for i, label in enumerate(registry):
        try:
            releases.append(read_release(os.path.join(releases_dir, label), label, require_diff=i > 0))
        except (FlatFileError, FileNotFoundError) as exc:
            raise CliError(str(exc)) from None
    try:
        history = build_history(releases, registry)
    except ReplayError as exc:
        where = _locate(os.path.join(releases_dir, exc.label or ""), exc.entity_id) if exc.label else releases_dir
        raise CliError(f"{where}: {exc}") from None

    try:
        tables = load_tables(tables_dir)
    except StoreError as exc:
        raise CliError(str(exc)) from None
    problems = [str(v) for v in validate(tables)] + table_history_mismatches(tables, history)
    if problems:
        raise CliError(f"{tables_dir}: {problems[0]}" + (f" (and {len(problems) - 1} more)" if len(problems) > 1 else ""))

    if mapping_file:
        try:
            with open(mapping_file, encoding="utf-8") as fh:
                mapping_text = fh.read()
        except OSError as exc:
            raise CliError(f"{mapping_file}: {exc.strerror}") from None
    else:
        mapping_file, mapping_text = "<built-in mapping>", default_mapping_text()
    try:
        spec = parse_mapping(mapping_text)
    except (MappingError, RdfSyntaxError) as exc:
        raise CliError(f"{mapping_file}: {exc}") from None

    sameas_file = sameas_file or os.path.join(tables_dir, "sameas.tsv")
    sameas_text = ""
    if os.path.isfile(sameas_file):
        with open(sameas_file, encoding="utf-8", newline="") as fh:
            sameas_text = fh.read()
    try:
        links = parse_sameas(sameas_text)
        VirtualGraph(spec, tables, history, links)
    except MappingError as exc:
        raise CliError(f"{mapping_file}: {exc}") from None
    return registry, history, tables, mapping_text, sameas_text


def table_history_mismatches(tables: TableSet, history: History) -> list:
    """Differences between the hairpin/mature tables and the live state of the last release."""
    snap = snapshot_at(history, None, history.current)
    out = []
    for kind, rows, live in (("hairpins", tables.hairpins, snap.hairpins),
                             ("matures", tables.matures, snap.matures)):
        for key in sorted(set(rows) | set(live)):
            eid = key[0] if isinstance(key, tuple) else key
            row = rows.get(key)
            if row is None:
                out.append(f"{kind}: {eid} is live in the last release but missing from the table")
            elif eid not in live:
                out.append(f"{kind}: {eid} is in the table but not live in the last release")
            elif (row.name, row.sequence) != live[eid]:
                out.append(f"{kind}: {eid} name/sequence differ from the last release")
    links = {(r.mimat, r.mima_id) for r in tables.rows("mature_hairpin")}
    live_links = {(m, p) for m, ps in snap.parents.items() for p in ps}
    for m, p in sorted(links ^ live_links):
        out.append(f"mature_hairpin: link {m} -> {p} disagrees with the last release")
    return out


# ---------------------------------------------------------------------------
# Build directory


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def build(releases_dir, tables_dir, out_dir, mapping_file=None, sameas_file=None) -> dict:
    registry, history, tables, mapping_text, sameas_text = read_inputs(
        releases_dir, tables_dir, mapping_file, sameas_file)
    os.makedirs(os.path.join(out_dir, "tables"), exist_ok=True)
    outputs = {name: dump(history) for name, dump in HISTORY_FILES.items()}
    outputs["versions.txt"] = dump_versions(registry)
    outputs["mapping.ttl"] = mapping_text
    outputs["sameas.tsv"] = sameas_text
    for name in sorted(SCHEMAS):
        outputs[f"tables/{name}.tsv"] = tables.dump(name)
    digests = {name: hashlib.sha256(text.encode("utf-8")).hexdigest() for name, text in sorted(outputs.items())}
    overall = hashlib.sha256("".join(f"{n}\t{d}\n" for n, d in digests.items()).encode()).hexdigest()
    manifest = {"format": 1, "versions": list(registry), "files": digests, "hash": overall}
    for name, text in outputs.items():
        _write(os.path.join(out_dir, name), text)
    _write(os.path.join(out_dir, MANIFEST), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


@dataclass
class Build:
    manifest: dict
    history: History
    tables: TableSet
    spec: MappingSpec
    sameas: list

    def graph(self, base: str = DEFAULT_BASE) -> VirtualGraph:
        return VirtualGraph(self.spec, self.tables, self.history, self.sameas, base)


def load_build(build_dir) -> Build:
    path = os.path.join(build_dir, MANIFEST)
    if not os.path.isfile(path):
        raise CliError(f"{path}: not a build directory (run 'mirlod build' first)")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)

    def read(name):
        with open(os.path.join(build_dir, name), encoding="utf-8", newline="") as fh:
            return fh.read()

    try:
        registry = load_versions(os.path.join(build_dir, "versions.txt"))
        history = load_history(*(read(n) for n in HISTORY_FILES), registry)
        tables = load_tables(os.path.join(build_dir, "tables"))
        spec = parse_mapping(read("mapping.ttl"))
        sameas = parse_sameas(read("sameas.tsv"))
    except (OSError, StoreError, MappingError, RdfSyntaxError, ValueError) as exc:
        raise CliError(f"{build_dir}: damaged build: {exc}") from None
    return Build(manifest, history, tables, spec, sameas)


# ---------------------------------------------------------------------------
# Commands


def cmd_build(args) -> int:
    manifest = build(args.releases, args.tables, args.out, args.mapping, args.sameas)
    print(f"built {len(manifest['versions'])} releases into {args.out} (hash {manifest['hash'][:12]})",
          file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    registry, history, tables, _, _ = read_inputs(args.releases, args.tables, args.mapping, args.sameas)
    print(f"ok: {len(registry)} releases, {len(history.events)} changes, "
          f"{len(tables.hairpins)} hairpins, {len(tables.matures)} matures", file=sys.stderr)
    return 0


def export(graph: VirtualGraph, scope: str, fmt: str, out) -> int:
    """Write the dump to text stream ``out``; returns the triple count."""
    if scope not in SCOPES:
        raise CliError(f"unknown scope {scope!r}; expected one of {', '.join(SCOPES)}")
    if fmt not in FORMATS:
        raise CliError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    triples = graph.enumerate_all(scope)
    if fmt == "turtle":
        triples = list(triples)
        out.write(serialize_turtle(triples, dict(STANDARD_PREFIXES, diana=graph.spec.diana)))
        return len(triples)
    count = 0
    for t in triples:
        out.write(t.n3() + "\n")
        count += 1
    return count


def cmd_export(args) -> int:
    if args.scope not in SCOPES:
        raise CliError(f"unknown scope {args.scope!r}; expected one of {', '.join(SCOPES)}")
    graph = load_build(args.build).graph(args.base)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            count = export(graph, args.scope, args.format, fh)
    else:
        count = export(graph, args.scope, args.format, sys.stdout)
        sys.stdout.flush()
    print(f"{count} triples", file=sys.stderr)
    return 0


def parse_listen(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise CliError(f"bad --listen address {text!r}; expected host:port")
    return host.strip("[]") or "127.0.0.1", int(port)


def cmd_serve(args) -> int:
    from .server import LodApp, LodServer

    host, port = parse_listen(args.listen)
    loaded = load_build(args.build)
    base = args.base or os.environ.get("MIRLOD_BASE") or f"http://{host}:{port}"
    app = LodApp(loaded.graph(base), loaded.manifest.get("hash", ""))
    try:
        server = LodServer((host, port), app)
    except OSError as exc:
        raise CliError(f"cannot listen on {host}:{port}: {exc.strerror or exc}") from None

    def stop(signum, frame):
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, stop)
    log.info("serving %s on http://%s:%d", base, *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    log.info("stopped")
    return 0


def cmd_gen(args) -> int:
    if args.releases < 1 or args.hairpins < 3 or args.matures < 1:
        raise CliError("need --releases >= 1, --hairpins >= 3 and --matures >= 1")
    try:
        corpus = generate(args.releases, args.hairpins, args.matures, args.seed)
    except GeneratorError as exc:
        raise CliError(str(exc)) from None
    write_corpus(corpus, args.out)
    print(f"wrote {args.releases} releases, {args.hairpins} hairpins, {args.matures} matures to {args.out}",
          file=sys.stderr)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mirlod", description="Versioned miRNA linked data store and server.")
    p.add_argument("--version", action="version", version=f"mirlod {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, func, text in (("build", cmd_build, "replay releases and write a build directory"),
                             ("validate", cmd_validate, "check the inputs without writing a build")):
        s = sub.add_parser(name, help=text)
        s.add_argument("releases", help="directory with versions.txt and one subdirectory per release")
        s.add_argument("tables", help="directory with the relational table TSVs")
        if name == "build":
            s.add_argument("out", help="output build directory")
        s.add_argument("--mapping", help="mapping file (default: built-in)")
        s.add_argument("--sameas", help="owl:sameAs links TSV (default: <tables>/sameas.tsv if present)")
        s.set_defaults(func=func)

    s = sub.add_parser("export", help="dump the virtual graph")
    s.add_argument("build")
    s.add_argument("--scope", default="all", help="current, versioned or all (default all)")
    s.add_argument("--format", default="ntriples", choices=FORMATS)
    s.add_argument("--out", help="output file (default stdout)")
    s.add_argument("--base", default=DEFAULT_BASE, help=f"base IRI (default {DEFAULT_BASE})")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("serve", help="run the HTTP server")
    s.add_argument("build")
    s.add_argument("--listen", default="127.0.0.1:8080", help="host:port (default 127.0.0.1:8080)")
    s.add_argument("--base", help="base IRI (default $MIRLOD_BASE or http://<listen>)")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("gen", help="write a synthetic release sequence and tables")
    s.add_argument("out")
    s.add_argument("--releases", type=int, default=12)
    s.add_argument("--hairpins", type=int, default=50)
    s.add_argument("--matures", type=int, default=80)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        return args.func(args)
    except CliError as exc:
        print(f"mirlod: error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1
