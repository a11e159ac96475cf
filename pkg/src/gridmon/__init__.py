"""Relational grid information and monitoring toolkit.

Producers describe the tables they publish with SQL DDL plus a view
predicate, consumers pose History, Latest or Continuous SELECT queries,
and a soft-state registry plus mediator routes each query to the
producers able to answer it. Archivers republish tuple streams into
queryable stores so layered fan-in topologies can be built.
"""

__version__ = "0.1.0"
