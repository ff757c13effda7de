"""Synthetic corpus with controllable trigger/NIL and sibling confusion.

Each sentence is filler tokens plus at most one trigger lemma. The gold
label at the lemma position is drawn from that lemma's label distribution
(its primary sub-type, the sibling sub-types, NIL). With probability
``signal_strength`` a context token that identifies the drawn label is
placed within ``signal_span`` positions of the lemma; otherwise the label
can only be guessed from the lemma's distribution.
"""

import json
import math
from dataclasses import dataclass, field

from confuse_forge import NIL
from confuse_forge.data import LabelSchema, Sentence, Vocabulary, build_instances, format_tsv
from confuse_forge.numerics import make_rng

DEFAULT_COARSE = {
    "Contact": ["Meet", "Broadcast", "Correspondence"],
    "Transaction": ["Transfer-Money", "Transfer-Ownership", "Transaction"],
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class GeneratorConfig:
    coarse_types: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_COARSE.items()})
    n_lemmas: int = 40
    # Template (or list of templates cycled over lemmas): mass on the
    # lemma's primary sub-type, on its siblings (split evenly), and on NIL.
    lemma_template: object = field(default_factory=lambda: {"primary": 0.45, "sibling": 0.25, "nil": 0.30})
    # Explicit per-lemma {label: prob} maps; overrides the template when set.
    lemma_distributions: list = None
    signal_strength: float = 0.6
    signals_per_label: int = 2
    signal_span: int = 2
    sentence_length: tuple = (6, 14)
    no_trigger_rate: float = 0.2
    n_fillers: int = 300
    splits: dict = field(default_factory=lambda: {"train": 5000, "dev": 1000, "test": 1000})
    seed: int = 0

    def __post_init__(self):
        self.sentence_length = tuple(self.sentence_length)
        self.validate()

    @property
    def schema(self):
        return LabelSchema.from_coarse_map(self.coarse_types)

    def validate(self):
        if not self.coarse_types:
            raise ConfigError("coarse_types", "at least one coarse type is required")
        for coarse, subs in self.coarse_types.items():
            if not subs:
                raise ConfigError(f"coarse_types.{coarse}", "needs at least one sub-type")
        schema = self.schema
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ConfigError("signal_strength", f"must lie in [0, 1], got {self.signal_strength}")
        if not 0.0 <= self.no_trigger_rate <= 1.0:
            raise ConfigError("no_trigger_rate", f"must lie in [0, 1], got {self.no_trigger_rate}")
        lo, hi = self.sentence_length
        if lo < 1 or hi < lo:
            raise ConfigError("sentence_length", f"invalid range {self.sentence_length}")
        if self.signal_strength > 0 and hi < 2:
            raise ConfigError("sentence_length", "signal tokens need sentences of length >= 2")
        for name in ("n_lemmas", "signals_per_label", "signal_span", "n_fillers"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        for split, n in self.splits.items():
            if n < 0:
                raise ConfigError(f"splits.{split}", "must be >= 0")
        if self.lemma_distributions is not None:
            if len(self.lemma_distributions) == 0:
                raise ConfigError("lemma_distributions", "must not be empty")
            for i, dist in enumerate(self.lemma_distributions):
                _check_dist(f"lemma_distributions[{i}]", dist, schema)
        else:
            templates = self.lemma_template
            if isinstance(templates, dict):
                templates = [templates]
            for i, tpl in enumerate(templates):
                fname = "lemma_template" if isinstance(self.lemma_template, dict) else f"lemma_template[{i}]"
                extra = set(tpl) - {"primary", "sibling", "nil"}
                if extra:
                    raise ConfigError(fname, f"unknown keys {sorted(extra)}")
                _check_dist(fname, tpl, None)

    def lemma_label_distributions(self):
        """Per-lemma ``{label id: prob}`` maps, fully resolved."""
        schema = self.schema
        if self.lemma_distributions is not None:
            return [{schema.id(label): float(p) for label, p in dist.items() if p > 0}
                    for dist in self.lemma_distributions]
        templates = self.lemma_template
        if isinstance(templates, dict):
            templates = [templates]
        sub_ids = list(range(1, len(schema)))
        out = []
        for i in range(self.n_lemmas):
            tpl = templates[i % len(templates)]
            primary = sub_ids[i % len(sub_ids)]
            sibs = [j for j in sub_ids if schema.are_siblings(primary, j)]
            dist = {primary: float(tpl.get("primary", 0.0))}
            sib_mass = float(tpl.get("sibling", 0.0))
            if sibs:
                for j in sibs:
                    dist[j] = dist.get(j, 0.0) + sib_mass / len(sibs)
            else:
                dist[primary] += sib_mass
            dist[0] = dist.get(0, 0.0) + float(tpl.get("nil", 0.0))
            out.append({k: v for k, v in sorted(dist.items()) if v > 0})
        return out

    def to_json(self):
        return {
            "coarse_types": self.coarse_types,
            "n_lemmas": self.n_lemmas,
            "lemma_template": self.lemma_template,
            "lemma_distributions": self.lemma_distributions,
            "signal_strength": self.signal_strength,
            "signals_per_label": self.signals_per_label,
            "signal_span": self.signal_span,
            "sentence_length": list(self.sentence_length),
            "no_trigger_rate": self.no_trigger_rate,
            "n_fillers": self.n_fillers,
            "splits": self.splits,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj):
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown generator config field")
        return cls(**obj)


def _check_dist(fname, dist, schema):
    if not isinstance(dist, dict) or not dist:
        raise ConfigError(fname, "must be a non-empty mapping")
    for key, p in dist.items():
        if schema is not None and key != NIL and key not in schema.coarse_of:
            raise ConfigError(f"{fname}.{key}", "label not in schema")
        if not isinstance(p, (int, float)) or p < 0 or not math.isfinite(p):
            raise ConfigError(f"{fname}.{key}", f"probability must be a non-negative number, got {p!r}")
    total = sum(dist.values())
    if abs(total - 1.0) > 1e-6:
        raise ConfigError(fname, f"probabilities sum to {total:g}, expected 1")


def lemma_token(i):
    return f"lem{i:03d}"


def signal_token(label_id, variant):
    return f"sig{label_id:02d}_{variant}"


def filler_token(i):
    return f"w{i:04d}"


def _draw(rng, dist):
    labels = list(dist)
    probs = [dist[k] for k in labels]
    u = rng.random()
    acc = 0.0
    for label, p in zip(labels, probs):
        acc += p
        if u < acc:
            return label
    return labels[-1]


def generate_sentences(config, n_sentences, rng, seen=None):
    """Draw ``n_sentences`` distinct sentences from ``rng``.

    ``seen`` is a set of token tuples shared across calls so that splits
    generated from one stream never repeat a sentence.
    """
    schema = config.schema
    dists = config.lemma_label_distributions()
    seen = set() if seen is None else seen
    lo, hi = config.sentence_length
    out = []
    attempts = 0
    while len(out) < n_sentences:
        attempts += 1
        if attempts > 100 * max(n_sentences, 1) + 1000:
            raise ConfigError("n_fillers", "cannot produce enough distinct sentences")
        length = int(rng.integers(lo, hi + 1))
        tokens = [filler_token(int(i)) for i in rng.integers(0, config.n_fillers, size=length)]
        labels = [NIL] * length
        if rng.random() >= config.no_trigger_rate:
            lemma = int(rng.integers(0, len(dists)))
            pos = int(rng.integers(0, length))
            gold = _draw(rng, dists[lemma])
            tokens[pos] = lemma_token(lemma)
            labels[pos] = schema.labels[gold]
            if rng.random() < config.signal_strength:
                offsets = [o for o in range(-config.signal_span, config.signal_span + 1)
                           if o != 0 and 0 <= pos + o < length]
                if offsets:
                    off = offsets[int(rng.integers(0, len(offsets)))]
                    variant = int(rng.integers(0, config.signals_per_label))
                    tokens[pos + off] = signal_token(gold, variant)
        key = tuple(tokens)
        if key in seen:
            continue
        seen.add(key)
        out.append(Sentence(tuple(tokens), tuple(labels)))
    return out


def generate_splits(config):
    """Generate every configured split from a single seeded stream."""
    rng = make_rng(config.seed, "generate")
    seen = set()
    return {name: generate_sentences(config, n, rng, seen) for name, n in config.splits.items()}


def generate_corpus(config, n_sentences, w=2, doc_id="synthetic"):
    """Generate one corpus; returns ``(instances, vocab, tsv_text)``."""
    sentences = generate_sentences(config, n_sentences, make_rng(config.seed, "generate"))
    vocab = Vocabulary.from_sentences(sentences)
    instances = build_instances(sentences, config.schema, vocab, w, doc_id)
    return instances, vocab, format_tsv(sentences)


def sidecar_json(config):
    obj = config.to_json()
    obj["labels"] = config.schema.labels
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
