"""Surrogate scorers: text -> (pseudo-perplexity, class confidence, label).

The built-in scorer pairs an additively smoothed n-gram language model with a
multinomial naive Bayes classifier. External scorers speak a line-delimited
JSON protocol over a child process's stdio, or the same bodies over HTTP.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import sparse

from .corpus import ConfigError, Dataset
from .metrics import accuracy, macro_f1
from .tokens import tokenize

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
CONFIDENCE_SUM_TOL = 1e-9


class ScorerError(RuntimeError):
    """Scorer failure or protocol violation; ``raw`` holds the offending response."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message if raw is None else f"{message}: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class ScoreTriple:
    perplexity: float
    confidence: tuple[float, ...]
    predicted_label: str

    def to_json(self) -> dict:
        return {"perplexity": self.perplexity, "confidence": list(self.confidence), "label": self.predicted_label}


def argmax_label(confidence: Sequence[float], labels: Sequence[str]) -> str:
    # first maximum wins, i.e. ties go to the lowest label index
    return labels[int(np.argmax(confidence))]


class SurrogateModel(Protocol):
    labels: tuple[str, ...]
    provenance: dict

    def score(self, text: str, aspect: str | None = None) -> ScoreTriple: ...

    def close(self) -> None: ...


@dataclass(frozen=True)
class SurrogateTrainConfig:
    # pass-through fields for external scorers
    learning_rate: float = 1e-5
    batch_size: int = 16
    max_sequence_length: int = 80
    l2_lambda: float = 1e-8
    max_epochs: int = 10
    checkpoint_metric: str = "accuracy"
    # lightweight scorer
    ngram_order: int = 2
    smoothing_alpha: float = 1.0
    grid_search: bool = True

    def __post_init__(self):
        if self.checkpoint_metric not in ("accuracy", "macro_f1"):
            raise ConfigError(f"checkpoint_metric must be accuracy or macro_f1, got {self.checkpoint_metric!r}")
        if self.ngram_order not in (1, 2, 3):
            raise ConfigError(f"ngram_order must be 1, 2 or 3, got {self.ngram_order}")
        for name in ("learning_rate", "batch_size", "max_sequence_length", "l2_lambda", "max_epochs", "smoothing_alpha"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


def normalize_tokens(text: str) -> list[str]:
    return [t.lower() for t in tokenize(text)]


class NgramLM:
    """Additively smoothed n-gram model with ``<s>`` padding, ``</s>`` and ``<unk>``.

    ``p(w | h) = (c(h, w) + alpha) / (c(h) + alpha * V)`` where ``V`` counts the
    known words plus ``<unk>`` and ``</s>``.
    """

    def __init__(self, order: int = 2, alpha: float = 1.0, vocabulary: Sequence[str] = ()):
        self.order = order
        self.alpha = alpha
        self.vocab = set(vocabulary) | {UNK, EOS}
        self.counts: dict[tuple, Counter] = defaultdict(Counter)
        self.totals: Counter = Counter()

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def fit(self, sequences: Sequence[Sequence[str]]) -> "NgramLM":
        for seq in sequences:
            self.vocab.update(seq)
        for seq in sequences:
            padded = [BOS] * (self.order - 1) + [self._known(t) for t in seq] + [EOS]
            for i in range(self.order - 1, len(padded)):
                h = tuple(padded[i - self.order + 1:i])
                self.counts[h][padded[i]] += 1
                self.totals[h] += 1
        return self

    def _known(self, tok: str) -> str:
        return tok if tok in self.vocab else UNK

    def log_probs(self, tokens: Sequence[str]) -> list[float]:
        """ln p(w_i | history) for each token (the end marker is not scored)."""
        padded = [BOS] * (self.order - 1) + [self._known(t) for t in tokens]
        V = self.vocab_size
        out = []
        for i in range(self.order - 1, len(padded)):
            h = tuple(padded[i - self.order + 1:i])
            c = self.counts.get(h)
            num = (c[padded[i]] if c else 0) + self.alpha
            out.append(math.log(num / (self.totals.get(h, 0) + self.alpha * V)))
        return out

    def perplexity(self, tokens: Sequence[str]) -> float:
        if not tokens:
            raise ValueError("perplexity of an empty token sequence")
        lp = self.log_probs(tokens)
        return math.exp(-math.fsum(lp) / len(lp))


class NaiveBayes:
    """Multinomial naive Bayes over unigram counts; unseen words are ignored."""

    def __init__(self, n_classes: int, alpha: float = 1.0):
        self.n_classes = n_classes
        self.alpha = alpha
        self.word_counts: dict[str, np.ndarray] = {}
        self.class_totals = np.zeros(n_classes)
        self.class_docs = np.zeros(n_classes)

    def fit(self, sequences: Sequence[Sequence[str]], targets: Sequence[int]) -> "NaiveBayes":
        for seq, y in zip(sequences, targets):
            self.class_docs[y] += 1
            for tok in seq:
                row = self.word_counts.get(tok)
                if row is None:
                    row = self.word_counts[tok] = np.zeros(self.n_classes)
                row[y] += 1
                self.class_totals[y] += 1
        self._log_prior = np.log(self.class_docs / self.class_docs.sum())
        self._log_denom = np.log(self.class_totals + self.alpha * len(self.word_counts))
        return self

    def log_joint(self, tokens: Sequence[str]) -> np.ndarray:
        scores = self._log_prior.copy()
        for tok in tokens:
            row = self.word_counts.get(tok)
            if row is not None:
                scores += np.log(row + self.alpha) - self._log_denom
        return scores

    def posterior(self, tokens: Sequence[str]) -> np.ndarray:
        s = self.log_joint(tokens)
        e = np.exp(s - s.max())
        return e / e.sum()


class CooccurrenceNeighbors:
    """Word neighbours by cosine similarity of +/-``window`` context counts."""

    def __init__(self, window: int = 2, top: int = 5):
        self.window = window
        self.top = top
        self.index: dict[str, int] = {}
        self.words: list[str] = []
        self._cache: dict[str, list[tuple[str, float]]] = {}

    def fit(self, sequences: Sequence[Sequence[str]]) -> "CooccurrenceNeighbors":
        for seq in sequences:
            for tok in seq:
                if tok not in self.index:
                    self.index[tok] = len(self.words)
                    self.words.append(tok)
        rows, cols = [], []
        for seq in sequences:
            ids = [self.index[t] for t in seq]
            for i, a in enumerate(ids):
                for j in range(max(0, i - self.window), min(len(ids), i + self.window + 1)):
                    if j != i:
                        rows.append(a)
                        cols.append(ids[j])
        n = len(self.words)
        m = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        m.sum_duplicates()
        norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        self._matrix = sparse.diags(1.0 / norms) @ m
        return self

    def neighbors(self, word: str) -> list[tuple[str, float]]:
        word = word.lower()
        if word in self._cache:
            return self._cache[word]
        i = self.index.get(word)
        if i is None:
            return []
        sims = np.asarray((self._matrix[i] @ self._matrix.T).todense()).ravel()
        sims[i] = 0.0
        order = sorted((j for j in np.nonzero(sims > 0)[0]), key=lambda j: (-sims[j], self.words[j]))
        out = [(self.words[j], float(sims[j])) for j in order[: self.top]]
        self._cache[word] = out
        return out

    def propose(self, tokens: Sequence[str], index: int) -> list[tuple[str, float]]:
        return self.neighbors(tokens[index])


class LightweightSurrogate:
    def __init__(self, labels, lm: NgramLM, nb: NaiveBayes, neighbors: CooccurrenceNeighbors | None = None,
                 provenance: dict | None = None):
        self.labels = tuple(labels)
        self.lm = lm
        self.nb = nb
        self.neighbors = neighbors
        self.provenance = provenance or {}

    def perplexity(self, text: str) -> float:
        return self.lm.perplexity(normalize_tokens(text))

    def confidence(self, text: str, aspect: str | None = None) -> tuple[float, ...]:
        return tuple(float(x) for x in self.nb.posterior(normalize_tokens(text)))

    def score(self, text: str, aspect: str | None = None) -> ScoreTriple:
        toks = normalize_tokens(text)
        if not toks:
            raise ScorerError(f"cannot score text without tokens: {text!r}")
        conf = tuple(float(x) for x in self.nb.posterior(toks))
        return ScoreTriple(self.lm.perplexity(toks), conf, argmax_label(conf, self.labels))

    def propose(self, tokens: Sequence[str], index: int) -> list[tuple[str, float]]:
        if self.neighbors is None:
            return []
        return self.neighbors.propose(tokens, index)

    def close(self) -> None:
        pass


def _grid(config: SurrogateTrainConfig) -> list[tuple[int, float]]:
    default = (config.ngram_order, config.smoothing_alpha)
    if not config.grid_search:
        return [default]
    grid = [(o, a) for o in (1, 2, 3) for a in (0.1, 0.5, 1.0)]
    return [default] + [g for g in grid if g != default]


def train_lightweight(
    train: Dataset,
    valid: Dataset | None,
    config: SurrogateTrainConfig | None = None,
    seed: int = 0,
    fold_iteration: int = -1,
    train_ids: Sequence[int] | None = None,
) -> LightweightSurrogate:
    """Fit the n-gram LM and NB classifier, picking (order, alpha) on ``valid``.

    Selection maximises the checkpoint metric, then minimises validation
    perplexity; the configured default wins ties and is used when ``valid`` is
    empty. Training is deterministic, so ``seed`` is only recorded.
    """
    config = config or SurrogateTrainConfig()
    if len(train) == 0:
        raise ConfigError("cannot train a surrogate on an empty dataset")
    if valid is not None and valid.labels != train.labels:
        raise ConfigError("train and valid label sets differ")
    present = {ex.label for ex in train}
    missing = [lab for lab in train.labels if lab not in present]
    if missing:
        raise ConfigError(f"label(s) {missing} absent from surrogate training data")

    seqs = [normalize_tokens(ex.text) for ex in train]
    targets = [train.label_index(ex.label) for ex in train]
    valid_seqs = [normalize_tokens(ex.text) for ex in valid] if valid is not None else []
    valid_gold = [ex.label for ex in valid] if valid is not None else []

    nbs: dict[float, NaiveBayes] = {}
    best = None
    candidates = _grid(config) if valid_seqs else _grid(config)[:1]
    for order, alpha in candidates:
        lm = NgramLM(order, alpha).fit(seqs)
        nb = nbs.get(alpha) or NaiveBayes(len(train.labels), alpha).fit(seqs, targets)
        nbs[alpha] = nb
        metric, ppl = None, None
        if valid_seqs:
            pred = [argmax_label(nb.posterior(s), train.labels) for s in valid_seqs]
            metric = (accuracy if config.checkpoint_metric == "accuracy" else
                      lambda g, p: macro_f1(g, p, train.labels))(valid_gold, pred)
            lps = [lp for s in valid_seqs if s for lp in lm.log_probs(s)]
            ppl = math.exp(-math.fsum(lps) / len(lps)) if lps else 1.0
            key = (metric, -ppl)
        else:
            key = (0.0, 0.0)
        if best is None or key > best[0]:
            best = (key, order, alpha, lm, nb, metric, ppl)

    _, order, alpha, lm, nb, metric, ppl = best
    neighbors = CooccurrenceNeighbors().fit(seqs)
    provenance = {
        "kind": "lightweight",
        "fold_iteration": fold_iteration,
        "train_ids": list(train_ids) if train_ids is not None else None,
        "n_train": len(train),
        "n_valid": len(valid_seqs),
        "selected": {"ngram_order": order, "smoothing_alpha": alpha},
        "checkpoint_metric": config.checkpoint_metric,
        "valid_metric": metric,
        "valid_perplexity": ppl,
        "seed": seed,
    }
    return LightweightSurrogate(train.labels, lm, nb, neighbors, provenance)


def pseudo_perplexity(model, text: str) -> float:
    if not tokenize(text):
        raise ValueError("pseudo-perplexity needs at least one token")
    if isinstance(model, LightweightSurrogate):
        return model.perplexity(text)
    return model.score(text).perplexity


def confidence(model, text: str, aspect: str | None = None) -> tuple[float, ...]:
    if not text.strip():
        raise ValueError("confidence of empty text")
    return model.score(text, aspect).confidence


# -- external scorer protocol ----------------------------------------------

def validate_response(raw: str, request_id: int, labels: Sequence[str]) -> ScoreTriple:
    """Parse one protocol response line and enforce the ScoreTriple invariants."""
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        raise ScorerError("malformed scorer response: not JSON", raw)
    if not isinstance(obj, dict):
        raise ScorerError("malformed scorer response: not an object", raw)
    if "error" in obj:
        raise ScorerError(f"scorer reported error: {obj['error']}", raw)
    for key in ("id", "perplexity", "confidence", "label"):
        if key not in obj:
            raise ScorerError(f"malformed scorer response: missing field {key!r}", raw)
    if obj["id"] != request_id:
        raise ScorerError(f"malformed scorer response: id {obj['id']!r} != request id {request_id}", raw)
    ppl = obj["perplexity"]
    if isinstance(ppl, bool) or not isinstance(ppl, (int, float)) or not math.isfinite(ppl) or ppl < 1:
        raise ScorerError("malformed scorer response: perplexity must be a finite number >= 1", raw)
    conf = obj["confidence"]
    if (not isinstance(conf, list) or len(conf) != len(labels)
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in conf)):
        raise ScorerError(f"malformed scorer response: confidence must be {len(labels)} numbers", raw)
    if any(not 0.0 <= c <= 1.0 for c in conf) or abs(math.fsum(conf) - 1.0) > CONFIDENCE_SUM_TOL:
        raise ScorerError("malformed scorer response: confidence is not a probability vector", raw)
    label = obj["label"]
    if label not in labels:
        raise ScorerError(f"malformed scorer response: unknown label {label!r}", raw)
    if label != argmax_label(conf, labels):
        raise ScorerError("malformed scorer response: label is not the argmax of confidence", raw)
    return ScoreTriple(float(ppl), tuple(float(c) for c in conf), label)


class _ProcessTransport:
    def __init__(self, command: str, timeout: float):
        self.command = command
        self.timeout = timeout
        self.proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8", bufsize=1,
        )
        self.lines: queue.Queue = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def request(self, payload: dict) -> str:
        try:
            self.proc.stdin.write(json.dumps(payload) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ScorerError(f"scorer process {self.command!r} is not accepting input: {e}")
        try:
            line = self.lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ScorerError(f"scorer timed out after {self.timeout}s")
        if line is None:
            raise ScorerError(f"scorer process {self.command!r} exited (code {self.proc.poll()})")
        return line.strip()

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()


class _HttpTransport:
    def __init__(self, url: str, timeout: float):
        self.url = url
        self.timeout = timeout

    def request(self, payload: dict) -> str:
        req = urllib.request.Request(
            self.url, data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"}, method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read().decode("utf-8").strip()
        except TimeoutError:
            raise ScorerError(f"scorer timed out after {self.timeout}s")
        except urllib.error.URLError as e:
            raise ScorerError(f"scorer endpoint {self.url} failed: {e}")

    def close(self):
        pass


class ExternalScorer:
    def __init__(self, transport, labels: Sequence[str], provenance: dict | None = None):
        self.transport = transport
        self.labels = tuple(labels)
        self.provenance = provenance or {}
        self._lock = threading.Lock()
        self._next_id = 0

    def score(self, text: str, aspect: str | None = None) -> ScoreTriple:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            raw = self.transport.request({"id": rid, "text": text, "aspect": aspect, "labels": list(self.labels)})
        return validate_response(raw, rid, self.labels)

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_external_scorer(spec: str, labels: Sequence[str], timeout: float = 30.0) -> ExternalScorer:
    """``spec`` is ``exec:<command line>`` or ``http:<url>`` (a bare http(s) URL also works)."""
    if spec.startswith("exec:"):
        transport = _ProcessTransport(spec[len("exec:"):], timeout)
    elif spec.startswith(("http://", "https://")):
        transport = _HttpTransport(spec, timeout)
    elif spec.startswith("http:"):
        transport = _HttpTransport(spec[len("http:"):], timeout)
    else:
        raise ConfigError(f"scorer spec must start with exec: or http:, got {spec!r}")
    return ExternalScorer(transport, labels, {"kind": "external", "spec": spec})
