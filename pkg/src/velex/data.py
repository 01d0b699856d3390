"""Synthetic text-image corpus with planted chunk-to-region structure.

Every record pairs a templated sentence with a bag of region feature
vectors. Each noun concept owns a fixed signature vector; its partner
concept (the one it contradicts) owns the negated signature. A noun
phrase in the sentence then either matches a region (its concept is
depicted), conflicts with one (the partner concept is depicted), or has
no evidence at all. The relation label follows mechanically:

    any conflict -> contradiction, else any no-evidence -> neutral,
    else -> entailment

which keeps labels re-derivable from the planted structure. Image ids
are unique per record and split ranges never overlap.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chunking as ck
from .config import DataConfig
from .text import Vocabulary

NOUN_PAIRS = [
    ("dog", "cat"),
    ("man", "woman"),
    ("car", "bike"),
    ("tree", "house"),
    ("bird", "fish"),
    ("sign", "ball"),
]
DETERMINERS = ["a", "the"]
ADJECTIVES = ["young", "old", "red", "blue", "big", "small"]
AUXILIARIES = ["is"]
VERBS = ["running", "sleeping", "standing", "playing", "walking", "jumping"]
PREPOSITIONS = ["near"]
EXPLANATION_WORDS = ["image", "shows", "no", "not", "evidence", "of"]
RELATION_NAMES = ["entailment", "contradiction", "neutral"]

SPLIT_NAMES = ("pretrain", "train", "val", "test")


class DataError(ValueError):
    pass


def nouns() -> list[str]:
    return [w for pair in NOUN_PAIRS for w in pair]


def partner_map() -> dict[str, str]:
    out = {}
    for a, b in NOUN_PAIRS:
        out[a] = b
        out[b] = a
    return out


def make_vocabulary() -> Vocabulary:
    tags: dict[str, str] = {}
    for w in DETERMINERS:
        tags[w] = ck.DET
    for w in ADJECTIVES:
        tags[w] = ck.ADJ
    for w in nouns():
        tags[w] = ck.NOUN
    for w in AUXILIARIES:
        tags[w] = ck.AUX
    for w in VERBS:
        tags[w] = ck.VERB
    for w in PREPOSITIONS + EXPLANATION_WORDS + RELATION_NAMES:
        tags[w] = ck.OTHER
    words = (
        DETERMINERS
        + ADJECTIVES
        + nouns()
        + AUXILIARIES
        + VERBS
        + PREPOSITIONS
        + EXPLANATION_WORDS
        + RELATION_NAMES
    )
    return Vocabulary(words, tags)


def concept_signatures(feat_dim: int, seed: int) -> dict[str, np.ndarray]:
    """Unit-norm feature directions; partners get the negated vector."""
    rng = np.random.default_rng(seed)
    sigs: dict[str, np.ndarray] = {}
    for a, b in NOUN_PAIRS:
        v = rng.normal(size=feat_dim)
        v = v / np.linalg.norm(v)
        sigs[a] = v
        sigs[b] = -v
    return sigs


def relation_label(sentence_nouns: list[str], region_concepts: list[str]) -> int:
    """Mechanical relation from sentence nouns vs depicted concepts."""
    partners = partner_map()
    present = set(region_concepts)
    any_gap = False
    for c in sentence_nouns:
        if c in present:
            continue
        if partners[c] in present:
            return RELATION_NAMES.index("contradiction")
        any_gap = True
    if any_gap:
        return RELATION_NAMES.index("neutral")
    return RELATION_NAMES.index("entailment")


@dataclass
class DatasetRecord:
    id: int
    image_id: int
    words: list[str]
    spans: list[ck.Span] | None
    regions: np.ndarray          # (N+1, f): global feature first
    region_concepts: list[str]   # N planted concepts (audit/eval metadata)
    align: list[int] | None      # per chunk: 0 global, 1..N region, -1 unlabeled
    label: int
    explanation: list[str]

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "words": self.words,
            "spans": ck.spans_to_field(self.spans) if self.spans is not None else None,
            "regions": [list(map(float, row)) for row in self.regions],
            "region_concepts": self.region_concepts,
            "align": self.align,
            "label": self.label,
            "label_name": RELATION_NAMES[self.label],
            "explanation": self.explanation,
        }

    @classmethod
    def from_json_dict(cls, blob: dict) -> "DatasetRecord":
        spans = blob.get("spans")
        return cls(
            id=int(blob["id"]),
            image_id=int(blob["image_id"]),
            words=list(blob["words"]),
            spans=ck.spans_from_field(spans) if spans is not None else None,
            regions=np.asarray(blob["regions"], dtype=np.float64),
            region_concepts=list(blob["region_concepts"]),
            align=list(blob["align"]) if blob.get("align") is not None else None,
            label=int(blob["label"]),
            explanation=list(blob["explanation"]),
        )

    @property
    def n_regions(self) -> int:
        return self.regions.shape[0] - 1


def _noun_phrase(rng, concept: str) -> list[str]:
    words = [DETERMINERS[rng.integers(len(DETERMINERS))]]
    if rng.random() < 0.5:
        words.append(ADJECTIVES[rng.integers(len(ADJECTIVES))])
    words.append(concept)
    return words


def build_record(
    rec_id: int,
    image_id: int,
    label: int,
    rng: np.random.Generator,
    sigs: dict[str, np.ndarray],
    cfg: DataConfig,
    vocab: Vocabulary,
) -> DatasetRecord:
    partners = partner_map()
    n = int(rng.integers(cfg.min_regions, cfg.max_regions + 1))
    pair_ids = rng.choice(len(NOUN_PAIRS), size=n, replace=False)
    region_concepts = [NOUN_PAIRS[p][rng.integers(2)] for p in pair_ids]

    two_nps = rng.random() < 0.5
    n_nps = 2 if two_nps else 1
    # the subject phrase always carries the deciding evidence; any second
    # phrase is matched, so the relation hinges on one planted chunk
    deciding = 0

    used_regions: list[int] = []
    np_concepts: list[str] = []
    np_region: list[int] = []  # matched region index or -1
    for slot in range(n_nps):
        if label != 0 and slot == deciding:
            if label == 1:  # contradiction: partner of a depicted concept
                r = int(rng.integers(n))
                np_concepts.append(partners[region_concepts[r]])
            else:  # neutral: a pair absent from the image entirely
                free = [p for p in range(len(NOUN_PAIRS)) if p not in set(pair_ids)]
                pair = NOUN_PAIRS[free[rng.integers(len(free))]]
                np_concepts.append(pair[rng.integers(2)])
            np_region.append(-1)
        else:
            choices = [r for r in range(n) if r not in used_regions]
            r = choices[int(rng.integers(len(choices)))]
            used_regions.append(r)
            np_concepts.append(region_concepts[r])
            np_region.append(r)

    # chunk plan: NP1 [is VERB] [near NP2]
    words: list[str] = []
    chunk_align: list[int] = []
    np_words: list[list[str]] = []
    nw = _noun_phrase(rng, np_concepts[0])
    np_words.append(nw)
    words += nw
    chunk_align.append(np_region[0] + 1 if np_region[0] >= 0 else -1)
    if rng.random() < 0.5:
        words += [AUXILIARIES[0], VERBS[rng.integers(len(VERBS))]]
        chunk_align.append(-1)
    if two_nps:
        words += PREPOSITIONS
        chunk_align.append(-1)
        nw = _noun_phrase(rng, np_concepts[1])
        np_words.append(nw)
        words += nw
        chunk_align.append(np_region[1] + 1 if np_region[1] >= 0 else -1)

    spans = ck.rule_chunk(words, vocab.tags)
    if len(spans) != len(chunk_align):
        raise DataError(f"record {rec_id}: chunk plan does not match chunker output")

    derived = relation_label(np_concepts, region_concepts)
    if derived != label:
        raise DataError(f"record {rec_id}: planted label {label} derives to {derived}")

    feats = np.stack(
        [
            sigs[c] + rng.normal(0.0, cfg.feature_noise, size=cfg.region_feat_dim)
            for c in region_concepts
        ]
    )
    # the global feature sums the regions, so every depicted concept keeps
    # unit weight in it regardless of how many regions the image has
    regions = np.vstack([feats.sum(axis=0, keepdims=True), feats])

    # explanations lean on hypothesis words (entailment repeats the whole
    # hypothesis), so explaining well and echoing salient input tokens
    # point the generator in the same direction
    bad = np_words[deciding]
    if label == 0:
        explanation = ["the", "image", "shows"] + list(words)
    elif label == 1:
        seen = partners[np_concepts[deciding]]
        explanation = ["a", seen, "not"] + bad
    else:
        explanation = ["no", "evidence", "of"] + bad

    return DatasetRecord(
        id=rec_id,
        image_id=image_id,
        words=words,
        spans=spans,
        regions=regions,
        region_concepts=region_concepts,
        align=chunk_align,
        label=label,
        explanation=explanation,
    )


def generate_records(cfg: DataConfig, vocab: Vocabulary | None = None) -> dict[str, list[DatasetRecord]]:
    """Build all four splits in memory. Pretrain records are entailment
    only (every noun phrase matched, hence fully labeled); the other
    splits cycle through the three relations."""
    if cfg.max_regions >= len(NOUN_PAIRS):
        raise DataError(
            f"max_regions must leave an unused concept pair (< {len(NOUN_PAIRS)})"
        )
    vocab = vocab if vocab is not None else make_vocabulary()
    sigs = concept_signatures(cfg.region_feat_dim, cfg.seed + 7919)
    rng = np.random.default_rng(cfg.seed)
    sizes = {
        "pretrain": cfg.pretrain_size,
        "train": cfg.train_size,
        "val": cfg.val_size,
        "test": cfg.test_size,
    }
    splits: dict[str, list[DatasetRecord]] = {}
    image_id = 0
    rec_id = 0
    for split in SPLIT_NAMES:
        records = []
        for i in range(sizes[split]):
            label = 0 if split == "pretrain" else i % 3
            records.append(build_record(rec_id, image_id, label, rng, sigs, cfg, vocab))
            rec_id += 1
            image_id += 1
        splits[split] = records
    return splits


def write_records(path: Path, records: list[DatasetRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")


def read_records(path: Path) -> list[DatasetRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(DatasetRecord.from_json_dict(json.loads(line)))
    return records


@dataclass
class DatasetBundle:
    vocab: Vocabulary
    splits: dict[str, list[DatasetRecord]]
    meta: dict

    def __getitem__(self, split: str) -> list[DatasetRecord]:
        return self.splits[split]


def check_split_disjointness(splits: dict[str, list[DatasetRecord]]):
    names = list(splits)
    id_sets = {s: {r.image_id for r in splits[s]} for s in names}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            common = id_sets[a] & id_sets[b]
            if common:
                raise DataError(
                    f"image ids shared between {a!r} and {b!r}: {sorted(common)[:5]}"
                )


def generate_dataset(cfg: DataConfig, out_dir: str | Path, force: bool = False) -> DatasetBundle:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    existing = [p for p in ("vocab.json", "meta.json") if (out / p).exists()]
    existing += [f"{s}.jsonl" for s in SPLIT_NAMES if (out / f"{s}.jsonl").exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {existing} in {out} (use --force)")
    vocab = make_vocabulary()
    splits = generate_records(cfg, vocab)
    check_split_disjointness(splits)
    vocab.save(out / "vocab.json")
    meta = {
        "seed": cfg.seed,
        "region_feat_dim": cfg.region_feat_dim,
        "feature_noise": cfg.feature_noise,
        "sizes": {s: len(splits[s]) for s in SPLIT_NAMES},
        "relations": RELATION_NAMES,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    for split in SPLIT_NAMES:
        write_records(out / f"{split}.jsonl", splits[split])
    return DatasetBundle(vocab=vocab, splits=splits, meta=meta)


def load_dataset(data_dir: str | Path) -> DatasetBundle:
    d = Path(data_dir)
    vocab = Vocabulary.load(d / "vocab.json")
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    splits = {s: read_records(d / f"{s}.jsonl") for s in SPLIT_NAMES}
    check_split_disjointness(splits)
    return DatasetBundle(vocab=vocab, splits=splits, meta=meta)
