"""Toolkit for a federated language-archive metadata network.

Qualified-DC records with controlled vocabularies, single-document
repositories, a harvesting-protocol data provider (including a virtual
provider over posted repository files), an aggregator with a Query verb,
and a virtual service provider that renders query results as HTML.
"""

__version__ = "0.1.0"
