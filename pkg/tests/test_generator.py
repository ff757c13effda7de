from collections import Counter, defaultdict

import pytest

from confuse_forge.data import parse_corpus
from confuse_forge.generator import (ConfigError, GeneratorConfig, generate_corpus, generate_splits,
                                     lemma_token)


def trigger_positions(sentences):
    """(lemma, window-signal tokens, gold) for each lemma occurrence."""
    out = []
    for s in sentences:
        for i, tok in enumerate(s.tokens):
            if tok.startswith("lem"):
                ctx = tuple(t for t in s.tokens[max(0, i - 2):i + 3] if t.startswith("sig"))
                out.append((tok, ctx, s.labels[i]))
    return out


class TestConfig:
    def test_defaults_valid(self):
        cfg = GeneratorConfig()
        assert len(cfg.schema) == 7
        dists = cfg.lemma_label_distributions()
        assert len(dists) == 40
        for d in dists:
            assert sum(d.values()) == pytest.approx(1.0)

    def test_bad_distribution_names_field(self):
        with pytest.raises(ConfigError) as exc:
            GeneratorConfig(lemma_template={"primary": 0.5, "sibling": 0.2, "nil": 0.2})
        assert exc.value.field == "lemma_template"
        assert "0.9" in str(exc.value)

    def test_bad_signal_strength(self):
        with pytest.raises(ConfigError, match="signal_strength"):
            GeneratorConfig(signal_strength=1.5)

    def test_explicit_distribution_unknown_label(self):
        with pytest.raises(ConfigError, match=r"lemma_distributions\[0\]"):
            GeneratorConfig(lemma_distributions=[{"Life:Die": 1.0}])


class TestGeneration:
    def test_deterministic(self):
        cfg = GeneratorConfig(splits={"train": 200})
        assert generate_splits(cfg) == generate_splits(cfg)

    def test_splits_disjoint(self):
        cfg = GeneratorConfig(splits={"train": 300, "dev": 100, "test": 100}, n_fillers=20)
        sp = generate_splits(cfg)
        seen = [set(s.tokens for s in v) for v in sp.values()]
        assert len(seen[0] & seen[1]) == 0 and len(seen[0] & seen[2]) == 0 and len(seen[1] & seen[2]) == 0

    def test_at_most_one_trigger_lemma(self):
        for s in generate_splits(GeneratorConfig(splits={"train": 500}))["train"]:
            assert sum(t.startswith("lem") for t in s.tokens) <= 1
            assert sum(label != "NIL" for label in s.labels) <= 1

    def test_full_signal_is_fully_disambiguating(self):
        cfg = GeneratorConfig(signal_strength=1.0, splits={"train": 2000})
        groups = defaultdict(set)
        for lemma, ctx, gold in trigger_positions(generate_splits(cfg)["train"]):
            assert len(ctx) == 1
            groups[(lemma, ctx)].add(gold)
        # the Bayes-optimal rule (majority per observable context) makes no errors
        assert all(len(g) == 1 for g in groups.values())

    def test_no_signal_sibling_coinflip(self):
        cfg = GeneratorConfig(
            signal_strength=0.0, no_trigger_rate=0.0, splits={"train": 4000},
            lemma_distributions=[{"Contact:Meet": 0.5, "Contact:Broadcast": 0.5}])
        pos = trigger_positions(generate_splits(cfg)["train"])
        assert all(ctx == () for _, ctx, _ in pos)
        counts = Counter(gold for _, _, gold in pos)
        bayes_acc = max(counts.values()) / sum(counts.values())
        assert bayes_acc == pytest.approx(0.5, abs=0.02)

    def test_desk_scale_frequencies(self):
        cfg = GeneratorConfig(seed=3)
        sents = generate_splits(cfg)["train"]
        assert len(sents) == 5000
        schema = cfg.schema
        dists = cfg.lemma_label_distributions()
        pos = trigger_positions(sents)
        # pooled by role: primary / sibling / NIL, against the template
        role = Counter()
        expected = Counter()
        for lemma, _, gold in pos:
            i = int(lemma[3:])
            primary = max((k for k in dists[i] if k != 0), key=lambda k: dists[i][k])
            g = schema.id(gold)
            role["nil" if g == 0 else "primary" if g == primary else "sibling"] += 1
        n = sum(role.values())
        for key, p in cfg.lemma_template.items():
            assert role[key] / n == pytest.approx(p, abs=0.03)
        # and overall label frequencies against the lemma mixture
        lemma_counts = Counter(int(lemma[3:]) for lemma, _, _ in pos)
        for k in range(len(schema)):
            expected[k] = sum(lemma_counts[i] * dists[i].get(k, 0.0) for i in lemma_counts) / n
        observed = Counter(schema.id(g) for _, _, g in pos)
        for k in range(len(schema)):
            assert observed[k] / n == pytest.approx(expected[k], abs=0.03)

    def test_roundtrip_through_tsv(self, tmp_path):
        cfg = GeneratorConfig(splits={"train": 300})
        instances, vocab, tsv = generate_corpus(cfg, 300, w=2, doc_id="train")
        path = tmp_path / "train.tsv"
        path.write_text(tsv, encoding="utf-8")
        parsed, vocab2 = parse_corpus(path, cfg.schema, w=2)
        assert vocab2 == vocab
        assert parsed == instances

    def test_lemma_tokens_exist(self):
        sents = generate_splits(GeneratorConfig(splits={"train": 300}))["train"]
        toks = {t for s in sents for t in s.tokens}
        assert lemma_token(0) in toks
