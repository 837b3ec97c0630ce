"""microciv: a desk-scale Civilization-style testbed for decision agents.

Subpackages and modules:

- ``ruleset``: data-driven content packs (terrains, techs, buildings, units).
- ``engine``: the authoritative turn-based rules engine.
- ``scoring``: civilization score and military strength formulas.
- ``persistence``: canonical save files and fog-of-war observations.
- ``simulator``: rollouts and counterfactual decision comparison.
- ``policy``: baseline rule AI and the pluggable advisor interface.
- ``agent``: memory, retrieval, skill workflows, and reflection.
- ``minigames``: negotiation and deception benchmarks.
- ``server``: multiplayer game host with an HTTP wire protocol.
- ``bench``: tournament harness, metrics, and reports.
"""

__version__ = "0.1.0"
