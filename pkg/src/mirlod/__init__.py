"""Versioned miRNA linked data: release replay, relational-to-RDF mapping, SPARQL subset and LOD server."""

__version__ = "0.1.0"
