"""Fingerspelling label alphabet and linguistic feature tables.

The alphabet is the 26 FS-letters plus the non-signing boundary symbols
``<s>`` and ``</s>``.  Two optional per-letter feature tables can be
attached: a phonological table (six hand-configuration attributes with
small categorical value sets) and a phonetic table (categorical joint-angle
columns).  Feature tables drive the auxiliary classifier heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

LETTERS: tuple[str, ...] = tuple("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
BOS = "<s>"
EOS = "</s>"

#: Peak labels that denote two letters compressed into a single peak.
#: Constituents are written in alphabetical order.
DIGRAPHS: tuple[str, ...] = ("CI", "GH", "IL", "IN", "IO", "IT")

#: Peak label used by annotators when a letter could not be identified.
UNKNOWN_PEAK = "?"

# The six phonological hand-configuration features and their value sets.
# The first value of each set is the non-signing ("silence") value, used
# for <s> and </s> frames.  Letter-to-value assignments are not shipped;
# they are supplied via a config table (see load_phonological_table).
PHONOLOGICAL_FEATURES: dict[str, tuple[str, ...]] = {
    "sf_por": ("SIL", "radial", "ulnar", "radial/ulnar"),
    "sf_joints": ("SIL", "flexed:base", "flexed:nonbase",
                  "flexed:base&nonbase", "stacked", "crossed", "spread"),
    "sf_quantity": ("N/A", "all", "one", "one>all", "all>one"),
    "sf_thumb": ("N/A", "unopposed", "opposed"),
    "sf_handpart": ("SIL", "base", "palm", "ulnar"),
    "uf": ("SIL", "open", "closed"),
}

#: Column schema of the phonetic (joint-angle) table.
PHONETIC_COLUMNS: tuple[str, ...] = (
    "index_mcp", "index_pip", "middle_mcp", "middle_pip",
    "ring_mcp", "ring_pip", "pinky_mcp", "pinky_pip",
    "spread", "thumb_y", "thumb_z", "thumb_pip", "thumb_touch", "palm",
)

#: Value used for <s>/</s> in every phonetic column.
PHONETIC_SIL = "SIL"


class AlphabetError(ValueError):
    """Raised for malformed alphabets or feature tables."""


def load_phonetic_table(path=None) -> dict[str, tuple[str, ...]]:
    """Load a letter -> joint-angle-values table from a TSV file.

    Columns must match PHONETIC_COLUMNS.  Without a path, the packaged
    default table is used.
    """
    if path is None:
        text = (resources.files("segscribe") / "data" /
                "phonetic_features.tsv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return _parse_feature_tsv(text, PHONETIC_COLUMNS, validate_values=None)


def load_phonological_table(path) -> dict[str, tuple[str, ...]]:
    """Load a letter -> phonological-values table from a TSV file.

    Values are checked against the PHONOLOGICAL_FEATURES value sets.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return _parse_feature_tsv(text, tuple(PHONOLOGICAL_FEATURES),
                              validate_values=PHONOLOGICAL_FEATURES)


def _parse_feature_tsv(text, columns, validate_values):
    header_seen = False
    table: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if not header_seen:
            header_seen = True
            if fields[0].lower() == "letter":
                if tuple(fields[1:]) != tuple(columns):
                    raise AlphabetError(
                        f"line {lineno}: header columns {fields[1:]} do not "
                        f"match expected schema {list(columns)}")
                continue
        if len(fields) != len(columns) + 1:
            raise AlphabetError(
                f"line {lineno}: expected {len(columns) + 1} fields, "
                f"got {len(fields)}")
        letter = fields[0].upper()
        if letter not in LETTERS:
            raise AlphabetError(f"line {lineno}: unknown letter {fields[0]!r}")
        if letter in table:
            raise AlphabetError(f"line {lineno}: duplicate row for {letter}")
        values = tuple(fields[1:])
        if validate_values is not None:
            for name, value in zip(columns, values):
                if value not in validate_values[name]:
                    raise AlphabetError(
                        f"line {lineno}: {value!r} is not a valid value "
                        f"for feature {name}")
        table[letter] = values
    missing = [c for c in LETTERS if c not in table]
    if missing:
        raise AlphabetError(f"table is missing letters: {missing}")
    return table


@dataclass(frozen=True)
class LabelAlphabet:
    """The FS-letter label set with optional linguistic feature tables.

    Label indices are stable: letters in alphabetical order get 0..25,
    then ``<s>`` and ``</s>``.
    """

    letters: tuple[str, ...] = LETTERS
    phonological: Mapping[str, tuple[str, ...]] | None = None
    phonetic: Mapping[str, tuple[str, ...]] | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        letters = tuple(self.letters)
        object.__setattr__(self, "letters", letters)
        if len(set(letters)) != len(letters):
            raise AlphabetError("letters are not unique")
        if BOS in letters or EOS in letters:
            raise AlphabetError("boundary symbols may not appear as letters")
        if self.phonological is not None:
            self._check_table(self.phonological, tuple(PHONOLOGICAL_FEATURES),
                              PHONOLOGICAL_FEATURES)
        if self.phonetic is not None:
            self._check_table(self.phonetic, PHONETIC_COLUMNS, None)
        index = {lab: i for i, lab in enumerate(self.labels)}
        object.__setattr__(self, "_index", index)

    def _check_table(self, table, columns, value_sets):
        missing = [c for c in self.letters if c not in table]
        extra = [c for c in table if c not in self.letters]
        if missing or extra:
            raise AlphabetError(
                f"feature table letters do not match alphabet "
                f"(missing {missing}, extra {extra})")
        for letter, values in table.items():
            if len(values) != len(columns):
                raise AlphabetError(
                    f"{letter}: expected {len(columns)} feature values, "
                    f"got {len(values)}")
            if value_sets is not None:
                for name, value in zip(columns, values):
                    if value not in value_sets[name]:
                        raise AlphabetError(
                            f"{letter}: invalid value {value!r} for {name}")

    @property
    def labels(self) -> tuple[str, ...]:
        """All decodable labels: letters then <s> then </s>."""
        return self.letters + (BOS, EOS)

    @property
    def size(self) -> int:
        return len(self.letters) + 2

    @property
    def bos_index(self) -> int:
        return len(self.letters)

    @property
    def eos_index(self) -> int:
        return len(self.letters) + 1

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise AlphabetError(f"unknown label {label!r}") from None

    def label(self, index: int) -> str:
        return self.labels[index]

    def indices(self, labels: Sequence[str]) -> list[int]:
        return [self.index(lab) for lab in labels]

    # -- classifier head definitions -------------------------------------

    def head_classes(self, head: str) -> tuple[str, ...]:
        """Class names of one classifier head.

        ``letter`` is the FS-letter head (letters plus <s>/</s>); other
        head names select a phonological feature or phonetic column.
        """
        if head == "letter":
            return self.labels
        if head in PHONOLOGICAL_FEATURES:
            return PHONOLOGICAL_FEATURES[head]
        if head in PHONETIC_COLUMNS:
            if self.phonetic is None:
                raise AlphabetError(f"head {head!r} needs a phonetic table")
            col = PHONETIC_COLUMNS.index(head)
            seen = sorted({self.phonetic[c][col] for c in self.letters})
            return (PHONETIC_SIL, *seen)
        raise AlphabetError(f"unknown classifier head {head!r}")

    def head_target(self, head: str, label: str) -> int:
        """Class index of `label` (letter or boundary symbol) under a head."""
        if head == "letter":
            return self.index(label)
        classes = self.head_classes(head)
        if label in (BOS, EOS):
            return 0  # SIL / N/A is always first
        if head in PHONOLOGICAL_FEATURES:
            if self.phonological is None:
                raise AlphabetError(f"head {head!r} needs a phonological table")
            value = self.phonological[label][
                list(PHONOLOGICAL_FEATURES).index(head)]
        else:
            value = self.phonetic[label][PHONETIC_COLUMNS.index(head)]
        return classes.index(value)

    def phonological_heads(self) -> tuple[str, ...]:
        return tuple(PHONOLOGICAL_FEATURES)

    def phonetic_heads(self) -> tuple[str, ...]:
        return PHONETIC_COLUMNS
