"""bountyboard: a diversified-ensembling model competition platform.

Competitors submit (group predicate, hypothesis) pairs against a shared
global model. Pairs that measurably improve their group on the hidden
validation split are ensembled into a pointer decision list, with automatic
repairs that keep every previously accepted group at its historical best.
"""

__version__ = "0.1.0"
