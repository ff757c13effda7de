"""Label schema, vocabulary, TSV corpus ingest and instance windows.

Corpus format: one ``token<TAB>label`` pair per line, ``label`` is ``NIL``
or ``Coarse:Sub``; a blank line ends a sentence. UTF-8.
"""

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from confuse_forge import NIL

UNK = "<unk>"
PAD = "<pad>"
UNK_ID = 0
PAD_ID = 1


class SchemaError(ValueError):
    pass


class CorpusParseError(ValueError):
    pass


class LabelSchema:
    """Ordered label universe: index 0 is NIL, the rest are ``Coarse:Sub``."""

    def __init__(self, labels):
        labels = list(labels)
        if not labels or labels[0] != NIL:
            raise SchemaError("label list must start with NIL")
        if NIL in labels[1:]:
            raise SchemaError("NIL may appear only once")
        if len(set(labels)) != len(labels):
            raise SchemaError("duplicate labels in schema")
        self.labels = labels
        self.coarse_of = {}
        for label in labels[1:]:
            coarse, sep, sub = label.partition(":")
            if not sep or not coarse or not sub:
                raise SchemaError(f"label {label!r} is not of the form Coarse:Sub")
            self.coarse_of[label] = coarse
        self._index = {label: i for i, label in enumerate(labels)}

    @classmethod
    def from_coarse_map(cls, coarse_map):
        """Build from ``{"Contact": ["Meet", "Broadcast"], ...}`` preserving order."""
        labels = [NIL]
        for coarse, subs in coarse_map.items():
            labels.extend(f"{coarse}:{sub}" for sub in subs)
        return cls(labels)

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelSchema) and self.labels == other.labels

    def __repr__(self):
        return f"LabelSchema({self.labels!r})"

    def id(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise SchemaError(f"unknown label {label!r}") from None

    def coarse_types(self):
        seen = []
        for label in self.labels[1:]:
            c = self.coarse_of[label]
            if c not in seen:
                seen.append(c)
        return seen

    def subtypes(self, coarse):
        return [i for i, label in enumerate(self.labels)
                if i > 0 and self.coarse_of[label] == coarse]

    def coarse_id(self, label_id):
        if label_id == 0:
            return None
        return self.coarse_of[self.labels[label_id]]

    def are_siblings(self, a, b):
        return a != b and a > 0 and b > 0 and self.coarse_id(a) == self.coarse_id(b)

    def to_json(self):
        return {"labels": list(self.labels)}


class Vocabulary:
    """Token ids: 0 is UNK, 1 is PAD, real tokens start at 2."""

    def __init__(self, tokens=()):
        self.tokens = [UNK, PAD]
        self._index = {UNK: UNK_ID, PAD: PAD_ID}
        for tok in tokens:
            self.add(tok)

    def add(self, token):
        if token not in self._index:
            self._index[token] = len(self.tokens)
            self.tokens.append(token)
        return self._index[token]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token):
        return self._index.get(token, UNK_ID)

    def digest(self):
        h = hashlib.sha256()
        for tok in self.tokens:
            h.update(tok.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    @classmethod
    def from_sentences(cls, sentences):
        vocab = cls()
        for sent in sentences:
            for tok in sent.tokens:
                vocab.add(tok)
        return vocab


@dataclass(frozen=True)
class Sentence:
    tokens: tuple
    labels: tuple


@dataclass(frozen=True)
class Instance:
    window: tuple
    gold: int
    origin: tuple  # (doc_id, sentence index, token index)


def read_tsv(path):
    """Read a corpus file into a list of :class:`Sentence`."""
    sentences = []
    tokens, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if tokens:
                    sentences.append(Sentence(tuple(tokens), tuple(labels)))
                    tokens, labels = [], []
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise CorpusParseError(f"{path}:{lineno}: expected 'token<TAB>label', got {line!r}")
            tokens.append(parts[0])
            labels.append(parts[1])
    if tokens:
        sentences.append(Sentence(tuple(tokens), tuple(labels)))
    return sentences


def format_tsv(sentences):
    lines = []
    for sent in sentences:
        for tok, label in zip(sent.tokens, sent.labels):
            lines.append(f"{tok}\t{label}\n")
        lines.append("\n")
    return "".join(lines)


def write_tsv(path, sentences):
    Path(path).write_text(format_tsv(sentences), encoding="utf-8")


def build_instances(sentences, schema, vocab, w=2, doc_id="corpus"):
    """One :class:`Instance` per token, windows padded with PAD."""
    if w < 1:
        raise ValueError(f"window half-width must be >= 1, got {w}")
    instances = []
    for s_idx, sent in enumerate(sentences):
        ids = [vocab.id(t) for t in sent.tokens]
        padded = [PAD_ID] * w + ids + [PAD_ID] * w
        for t_idx, label in enumerate(sent.labels):
            instances.append(Instance(
                window=tuple(padded[t_idx:t_idx + 2 * w + 1]),
                gold=schema.id(label),
                origin=(doc_id, s_idx, t_idx),
            ))
    return instances


def parse_corpus(path, schema, vocab=None, w=2, doc_id=None):
    """Parse a TSV corpus into instances.

    If ``vocab`` is None the vocabulary is built from this corpus (use this
    for the training split only). Returns ``(instances, vocab)``.
    """
    path = Path(path)
    sentences = read_tsv(path)
    for sent in sentences:
        for label in sent.labels:
            if label != NIL and label not in schema.coarse_of:
                line = _line_of_label(path, label)
                raise SchemaError(f"{path}:{line}: unknown label {label!r}")
    if vocab is None:
        vocab = Vocabulary.from_sentences(sentences)
    return build_instances(sentences, schema, vocab, w, doc_id or path.stem), vocab


def _line_of_label(path, label):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split("\t")
            if len(parts) == 2 and parts[1] == label:
                return lineno
    return 0


def schema_from_sentences(sentences):
    """Infer a schema: labels in order of first appearance, NIL first."""
    labels = [NIL]
    for sent in sentences:
        for label in sent.labels:
            if label not in labels:
                labels.append(label)
    return LabelSchema(labels)


def as_arrays(instances):
    """Stack instances into ``(windows[N, 2w+1], gold[N])`` int arrays."""
    if not instances:
        return np.zeros((0, 0), dtype=np.int64), np.zeros(0, dtype=np.int64)
    windows = np.array([inst.window for inst in instances], dtype=np.int64)
    gold = np.array([inst.gold for inst in instances], dtype=np.int64)
    return windows, gold


def undersample_mask(gold, ratio, rng):
    """Boolean keep-mask over ``gold`` label ids for NIL under-sampling.

    Keeps every non-NIL position and ``min(#NIL, round(ratio * #non-NIL))``
    NIL positions drawn uniformly without replacement.
    """
    if ratio <= 0:
        raise ValueError(f"sampling ratio must be positive, got {ratio}")
    gold = np.asarray(gold)
    nil_idx = np.flatnonzero(gold == 0)
    n_trig = gold.size - nil_idx.size
    if n_trig == 0:
        warnings.warn("undersample_nil: no non-NIL instances, returning input unchanged",
                      RuntimeWarning, stacklevel=3)
        return np.ones(gold.size, dtype=bool)
    keep_n = min(nil_idx.size, int(round(ratio * n_trig)))
    chosen = rng.choice(nil_idx.size, size=keep_n, replace=False)
    keep = gold != 0
    keep[nil_idx[chosen]] = True
    return keep


def undersample_nil(instances, ratio, rng):
    """Under-sampling baseline over a list of instances, order preserved."""
    keep = undersample_mask([inst.gold for inst in instances], ratio, rng)
    return [inst for inst, k in zip(instances, keep) if k]
