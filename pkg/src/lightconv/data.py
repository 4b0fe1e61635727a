"""Dataset formats, tokenizers and seeded synthetic generators.

File formats
------------
nwp
    one sentence per line, whitespace tokenized; optional vocabulary file with
    one token per line. Out-of-vocabulary tokens map to ``<unk>``.
intent_slot
    utterance blocks separated by blank lines. Each block opens with
    ``#intent <label>`` followed by one ``token<TAB>gazetteer<TAB>slot`` line
    per token; gazetteer tags are comma-joined, ``-`` for none.
doc_class
    one document per line, ``<0|1><TAB><text>``; the text is kept as raw bytes.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .models import BOS, NO_GAZ, PAD_CHAR, UNK_CHAR, UNK_WORD

TASKS = ("nwp", "intent_slot", "doc_class")
SPECIAL_WORDS = ("<unk>", "<s>")
ALPHABET = string.ascii_lowercase + string.digits + string.punctuation
NO_GAZ_TAG = "-"


# ---------------------------------------------------------------------------
# tokenizers

@dataclass
class Vocab:
    """Word ids: ``<unk>`` = 0, ``<s>`` = 1, then the listed words."""

    words: list[str]

    def __post_init__(self):
        if list(self.words[: len(SPECIAL_WORDS)]) != list(SPECIAL_WORDS):
            self.words = list(SPECIAL_WORDS) + [w for w in self.words if w not in SPECIAL_WORDS]
        self.index = {w: i for i, w in enumerate(self.words)}
        assert self.index["<unk>"] == UNK_WORD and self.index["<s>"] == BOS

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK_WORD) for t in tokens]

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocab":
        words = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
        return cls([w for w in words if w])

    @classmethod
    def from_corpus(cls, sentences: Sequence[Sequence[str]]) -> "Vocab":
        counts: dict[str, int] = {}
        for s in sentences:
            for w in s:
                counts[w] = counts.get(w, 0) + 1
        return cls(sorted(counts, key=lambda w: (-counts[w], w)))


def encode_chars(word: str) -> list[int]:
    """Char ids: PAD = 0, UNK = 1, then ``ALPHABET`` (input lowercased)."""
    return [ALPHABET.index(ch) + 2 if ch in ALPHABET else UNK_CHAR for ch in word.lower()]


CHAR_VOCAB = len(ALPHABET) + 2
assert PAD_CHAR == 0


# ---------------------------------------------------------------------------
# datasets

@dataclass
class NwpDataset:
    vocab: Vocab
    sentences: list[list[str]]
    entropy: float | None = None  # nats/token a perfect model attains, when known

    def __len__(self) -> int:
        return len(self.sentences)

    def ids(self) -> list[list[int]]:
        return [self.vocab.encode(s) for s in self.sentences]


@dataclass
class Utterance:
    intent: str
    tokens: list[str]
    gazetteer: list[list[str]]
    slots: list[str]

    def __post_init__(self):
        if not (len(self.tokens) == len(self.gazetteer) == len(self.slots)):
            raise DataError(
                f"misaligned utterance: {len(self.tokens)} tokens, {len(self.gazetteer)} gazetteer, "
                f"{len(self.slots)} slots"
            )


@dataclass
class EncodedUtterance:
    chars: list[list[int]]
    gaz: list[list[int]]
    slots: list[int]
    intent: int


@dataclass
class IntentSlotDataset:
    utterances: list[Utterance]
    intents: list[str] = field(default_factory=list)
    slot_tags: list[str] = field(default_factory=list)
    gaz_tags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.intents:
            self.intents = sorted({u.intent for u in self.utterances})
        if not self.slot_tags:
            self.slot_tags = sorted({s for u in self.utterances for s in u.slots})
        if not self.gaz_tags:
            self.gaz_tags = [NO_GAZ_TAG] + sorted({g for u in self.utterances for gs in u.gazetteer for g in gs})

    def __len__(self) -> int:
        return len(self.utterances)

    def encode(self, u: Utterance) -> EncodedUtterance:
        gi = {g: i for i, g in enumerate(self.gaz_tags)}
        si = {s: i for i, s in enumerate(self.slot_tags)}
        ii = {s: i for i, s in enumerate(self.intents)}
        return EncodedUtterance(
            chars=[encode_chars(t) for t in u.tokens],
            gaz=[[gi[g] for g in gs if g in gi] or [NO_GAZ] for gs in u.gazetteer],
            slots=[si.get(s, -1) for s in u.slots],
            intent=ii.get(u.intent, -1),
        )

    def encoded(self) -> list[EncodedUtterance]:
        return [self.encode(u) for u in self.utterances]


@dataclass
class Document:
    label: int
    data: bytes


@dataclass
class DocDataset:
    documents: list[Document]

    def __len__(self) -> int:
        return len(self.documents)


@dataclass
class DatasetSpec:
    task: str
    path: str | None = None
    synthetic: bool = False
    seed: int = 0
    size: int = 1000
    vocab_path: str | None = None
    split: str = "train"


# ---------------------------------------------------------------------------
# file loaders

def load_nwp(path: str | Path, vocab_path: str | Path | None = None, vocab: Vocab | None = None) -> NwpDataset:
    text = Path(path).read_text(encoding="utf-8")
    sentences = [line.split() for line in text.splitlines() if line.strip()]
    if vocab is None:
        vocab = Vocab.from_file(vocab_path) if vocab_path else Vocab.from_corpus(sentences)
    return NwpDataset(vocab, sentences)


def load_intent_slot(path: str | Path) -> IntentSlotDataset:
    utterances: list[Utterance] = []
    current: dict | None = None

    def close():
        if current is None:
            return
        if not current["tokens"]:
            raise DataError(f"{path}:{current['line']}: utterance '#intent {current['intent']}' has no tokens")
        utterances.append(Utterance(current["intent"], current["tokens"], current["gaz"], current["slots"]))

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            close()
            current = None
            continue
        if line.startswith("#intent"):
            close()
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: '#intent' line needs a label")
            current = {"intent": parts[1].strip(), "line": lineno, "tokens": [], "gaz": [], "slots": []}
            continue
        cols = line.split("\t")
        if len(cols) != 3 or not cols[0] or not cols[2]:
            raise DataError(f"{path}:{lineno}: expected token<TAB>gazetteer<TAB>slot, got {line!r}")
        if current is None:
            raise DataError(f"{path}:{lineno}: token line before any '#intent' header")
        current["tokens"].append(cols[0])
        current["gaz"].append([] if cols[1] == NO_GAZ_TAG else [g for g in cols[1].split(",") if g])
        current["slots"].append(cols[2])
    close()
    return IntentSlotDataset(utterances)


def load_doc_class(path: str | Path) -> DocDataset:
    docs = []
    for lineno, line in enumerate(Path(path).read_bytes().split(b"\n"), 1):
        line = line.rstrip(b"\r")
        if not line:
            continue
        label, sep, text = line.partition(b"\t")
        if not sep or label not in (b"0", b"1"):
            raise DataError(f"{path}:{lineno}: expected '<0|1><TAB><text>'")
        if not text:
            raise DataError(f"{path}:{lineno}: empty document")
        docs.append(Document(int(label), text))
    return DocDataset(docs)


def write_intent_slot(ds: IntentSlotDataset, path: str | Path) -> None:
    blocks = []
    for u in ds.utterances:
        rows = [f"#intent {u.intent}"]
        rows += [f"{t}\t{','.join(g) or NO_GAZ_TAG}\t{s}" for t, g, s in zip(u.tokens, u.gazetteer, u.slots)]
        blocks.append("\n".join(rows))
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")


def write_doc_class(ds: DocDataset, path: str | Path) -> None:
    Path(path).write_bytes(b"".join(b"%d\t%s\n" % (d.label, d.data) for d in ds.documents))


def write_nwp(ds: NwpDataset, path: str | Path, vocab_path: str | Path | None = None) -> None:
    Path(path).write_text("".join(" ".join(s) + "\n" for s in ds.sentences), encoding="utf-8")
    if vocab_path is not None:
        Path(vocab_path).write_text("".join(w + "\n" for w in ds.vocab.words[len(SPECIAL_WORDS):]), encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic generators

_SPLIT_STREAMS = {"train": 0, "dev": 1, "test": 2}


def _split_rng(seed: int, split: str) -> np.random.Generator:
    if split not in _SPLIT_STREAMS:
        raise ConfigError(f"split must be one of {tuple(_SPLIT_STREAMS)}, got {split!r}")
    child = np.random.SeedSequence(seed).spawn(len(_SPLIT_STREAMS))[_SPLIT_STREAMS[split]]
    return np.random.Generator(np.random.PCG64(child))


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


class MarkovChain:
    """Order-2 word chain with class structure and a closed-form entropy.

    Words fall into ``n_classes`` equal classes. The next class depends on the
    classes of the previous two words; the word within a class follows a fixed
    Zipf law. Sentences start from the stationary distribution.
    """

    def __init__(self, seed: int, vocab_size: int = 200, n_classes: int = 10, successors: int = 2):
        if vocab_size % n_classes:
            raise ConfigError("vocab_size must be a multiple of n_classes")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x4D41524B])))
        self.n_classes = n_classes
        self.per_class = vocab_size // n_classes
        self.words = _pronounceable_words(rng, vocab_size)
        ranks = np.arange(1, self.per_class + 1, dtype=np.float64)
        self.word_dist = (1.0 / ranks) / (1.0 / ranks).sum()
        trans = np.zeros((n_classes, n_classes, n_classes))
        for a in range(n_classes):
            for b in range(n_classes):
                nxt = rng.choice(n_classes, size=successors, replace=False)
                trans[a, b, nxt] = rng.dirichlet(np.full(successors, 2.0))
        self.trans = trans
        self.pair_stationary = self._stationary()

    def _stationary(self) -> np.ndarray:
        n = self.n_classes
        m = np.zeros((n * n, n * n))
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    m[a * n + b, b * n + c] = self.trans[a, b, c]
        pi = np.full(n * n, 1.0 / (n * n))
        for _ in range(10_000):
            nxt = pi @ m
            if np.abs(nxt - pi).max() < 1e-15:
                break
            pi = nxt
        return (pi / pi.sum()).reshape(n, n)

    def word(self, cls: int, j: int) -> str:
        return self.words[cls * self.per_class + j]

    @property
    def word_entropy(self) -> float:
        return _entropy(self.word_dist)

    @property
    def entropy_rate(self) -> float:
        """Stationary nats per token, ``H(W_t | W_{t-2}, W_{t-1})``."""
        cond = sum(self.pair_stationary[a, b] * _entropy(self.trans[a, b])
                   for a in range(self.n_classes) for b in range(self.n_classes))
        return cond + self.word_entropy

    def sentence_entropy(self, length: int) -> float:
        """Mean nats per token over a sentence whose first words have shorter context."""
        marg = self.pair_stationary.sum(axis=0)
        h0 = _entropy(marg) + self.word_entropy
        if length == 1:
            return h0
        joint = self.pair_stationary
        h1 = _entropy(joint.ravel()) - _entropy(marg) + self.word_entropy
        return (h0 + h1 + (length - 2) * self.entropy_rate) / length

    def sample(self, rng: np.random.Generator, n_sentences: int, length: int) -> list[list[str]]:
        n = self.n_classes
        out = []
        flat = self.pair_stationary.ravel()
        for _ in range(n_sentences):
            pair = rng.choice(n * n, p=flat)
            classes = [pair // n, pair % n]
            while len(classes) < length:
                classes.append(rng.choice(n, p=self.trans[classes[-2], classes[-1]]))
            js = rng.choice(self.per_class, size=len(classes), p=self.word_dist)
            out.append([self.word(c, j) for c, j in zip(classes[:length], js)])
        return out


def _pronounceable_words(rng: np.random.Generator, n: int) -> list[str]:
    cons, vows = "bcdfghklmnprstvz", "aeiou"
    seen: set[str] = set()
    words: list[str] = []
    while len(words) < n:
        syl = int(rng.integers(1, 4))
        w = "".join(cons[rng.integers(len(cons))] + vows[rng.integers(len(vows))] for _ in range(syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def synth_nwp(seed: int, size: int, length: int = 24, split: str = "train") -> NwpDataset:
    chain = MarkovChain(seed)
    vocab = Vocab(list(chain.words))
    sentences = chain.sample(_split_rng(seed, split), size, length)
    return NwpDataset(vocab, sentences, entropy=chain.sentence_entropy(length))


INTENT_TEMPLATES = {
    "open_app": ["open {app}", "please open {app}", "launch {app}", "start the {app} app"],
    "call_contact": ["call {contact}", "phone {contact}", "give {contact} a call", "please call {contact} now"],
    "send_message": ["send a message to {contact}", "text {contact}", "message {contact} please"],
    "set_alarm": ["set an alarm for {time}", "wake me up at {time}", "alarm at {time} please"],
    "get_weather": ["what is the weather in {location}", "weather for {location}", "is it raining in {location}"],
    "set_volume": ["set volume to {number}", "turn the volume to {number}", "volume {number} please"],
    "set_brightness": ["set brightness to {number}", "make the screen brightness {number}", "dim the screen to {number}"],
    "play_music": ["play music on {app}", "play some songs with {app}", "start music on {app}"],
}
SLOT_VALUES = {
    "app": ["spotify", "youtube", "maps", "camera", "gmail", "netflix", "whatsapp", "chrome", "calendar", "pandora"],
    "contact": ["alice", "bob", "jordan", "maria", "chen", "priya", "omar", "lucy smith", "dad", "mom"],
    "time": ["7 am", "noon", "6:30", "9 pm", "midnight", "5 30 am", "8 oclock", "10 am"],
    "location": ["paris", "austin", "jordan", "london", "tokyo", "new york", "lima", "cairo", "san diego"],
    "number": ["10", "fifty", "3", "seven", "80", "max", "twenty five", "0"],
}
GAZ_FOR_SLOT = {"app": "gaz_app", "contact": "gaz_person", "time": "gaz_time", "location": "gaz_city",
                "number": "gaz_number"}
SLOT_TAGS = ["O", "app", "contact", "location", "number", "time"]


def synth_intent_slot(seed: int, size: int, split: str = "train") -> IntentSlotDataset:
    """Template grammar with gazetteer hints that usually, not always, match the slot."""
    rng = _split_rng(seed, split)
    intents = sorted(INTENT_TEMPLATES)
    gaz_tags = [NO_GAZ_TAG] + sorted(GAZ_FOR_SLOT.values())
    lexicon: dict[str, set[str]] = {}
    for slot, values in SLOT_VALUES.items():
        for v in values:
            for tok in v.split():
                lexicon.setdefault(tok, set()).add(GAZ_FOR_SLOT[slot])
    utterances = []
    for _ in range(size):
        intent = intents[rng.integers(len(intents))]
        templates = INTENT_TEMPLATES[intent]
        template = templates[rng.integers(len(templates))]
        tokens, slots = [], []
        for piece in template.split():
            if piece.startswith("{"):
                slot = piece[1:-1]
                values = SLOT_VALUES[slot]
                value = values[rng.integers(len(values))]
                for tok in value.split():
                    tokens.append(tok)
                    slots.append(slot)
            else:
                tokens.append(piece)
                slots.append("O")
        gaz = []
        for tok, slot in zip(tokens, slots):
            tags = set()
            if slot != "O" and rng.random() < 0.9:
                tags.add(GAZ_FOR_SLOT[slot])
            if tok in lexicon and rng.random() < 0.5:
                tags |= lexicon[tok]
            if rng.random() < 0.03:
                tags.add(gaz_tags[1 + rng.integers(len(gaz_tags) - 1)])
            gaz.append(sorted(tags)[:2])
        utterances.append(Utterance(intent, tokens, gaz, slots))
    return IntentSlotDataset(utterances, intents=intents, slot_tags=list(SLOT_TAGS), gaz_tags=gaz_tags)


POSITIVE_WORDS = ["great", "excellent", "love", "perfect", "amazing", "wonderful", "best", "happy"]
NEGATIVE_WORDS = ["awful", "terrible", "broken", "hate", "worst", "refund", "poor", "waste"]
FILLER_WORDS = [
    "the", "a", "this", "product", "it", "was", "and", "i", "bought", "for", "my", "with", "item", "book",
    "movie", "cd", "after", "week", "use", "quality", "price", "shipping", "box", "really", "very", "just",
    "of", "to", "in", "on", "is", "but", "they", "we", "got", "arrived", "sound", "story", "screen", "battery",
]


def synth_doc_class(seed: int, size: int, split: str = "train") -> DocDataset:
    """Filler text with 2-4 sentiment keywords drawn from the label's keyword set only."""
    rng = _split_rng(seed, split)
    docs = []
    for _ in range(size):
        label = int(rng.integers(2))
        words = [FILLER_WORDS[i] for i in rng.integers(len(FILLER_WORDS), size=int(rng.integers(6, 16)))]
        keys = POSITIVE_WORDS if label else NEGATIVE_WORDS
        for _ in range(int(rng.integers(2, 5))):
            words.insert(int(rng.integers(len(words) + 1)), keys[rng.integers(len(keys))])
        docs.append(Document(label, " ".join(words).encode("ascii")))
    return DocDataset(docs)


def synth_generate(task: str, seed: int, size: int, split: str = "train", **kw):
    if task == "nwp":
        return synth_nwp(seed, size, split=split, **kw)
    if task == "intent_slot":
        return synth_intent_slot(seed, size, split=split)
    if task == "doc_class":
        return synth_doc_class(seed, size, split=split)
    raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")


def load_dataset(spec: DatasetSpec, **kw):
    if spec.synthetic:
        return synth_generate(spec.task, spec.seed, spec.size, split=spec.split, **kw)
    if spec.path is None:
        raise ConfigError("dataset spec needs a path or synthetic=True")
    if spec.task == "nwp":
        return load_nwp(spec.path, spec.vocab_path, **kw)
    if spec.task == "intent_slot":
        return load_intent_slot(spec.path)
    if spec.task == "doc_class":
        return load_doc_class(spec.path)
    raise ConfigError(f"unknown task {spec.task!r}; expected one of {TASKS}")


def unigram_entropy_ppl(train: NwpDataset, test: NwpDataset) -> float:
    """Perplexity of an add-one unigram model fit on ``train``, scored on ``test``."""
    V = len(train.vocab)
    counts = np.ones(V)
    for s in train.ids():
        np.add.at(counts, s, 1)
    logp = np.log(counts / counts.sum())
    ids = [i for s in test.ids() for i in s]
    return math.exp(-float(logp[ids].mean()))
