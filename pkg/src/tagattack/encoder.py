"""Deterministic tokenizer, hashed bag-of-words encoder, and candidate generators.

The encoder stands in for a transformer text embedder: each token hashes to a
signed coordinate in a d-dimensional space, contributions are summed over the
unmasked tokens, and the result is L2-normalized. Masked tokens contribute
nothing, so coalition evaluation is exactly decomposable.
"""
from __future__ import annotations

import hashlib
import json
import re
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")

MASK_TOKEN = "[MASK]"


@dataclass(frozen=True)
class TokenSequence:
    """Ordered token list with a parallel mask flag per position."""

    tokens: tuple[str, ...]
    mask_flags: tuple[bool, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.mask_flags):
            raise ValueError("tokens and mask_flags must have equal length")

    def __len__(self) -> int:
        return len(self.tokens)

    @staticmethod
    def from_tokens(tokens: Sequence[str]) -> "TokenSequence":
        toks = tuple(tokens)
        return TokenSequence(tokens=toks, mask_flags=(False,) * len(toks))

    def with_masked(self, positions: Sequence[int]) -> "TokenSequence":
        flags = list(self.mask_flags)
        for p in positions:
            flags[p] = True
        return TokenSequence(tokens=self.tokens, mask_flags=tuple(flags))

    def with_replaced(self, position: int, word: str) -> "TokenSequence":
        toks = list(self.tokens)
        toks[position] = word
        return TokenSequence(tokens=tuple(toks), mask_flags=self.mask_flags)


def tokenize(raw: str) -> TokenSequence:
    """Lowercase and split on non-alphanumeric runs; empty tokens are dropped."""
    return TokenSequence.from_tokens(_TOKEN_RE.findall(raw.lower()))


class HashedEncoder:
    """Signed feature-hashing encoder, deterministic for a fixed (dim, seed).

    Two independent keyed blake2b hashes pick the bucket index and the sign.
    The per-token vectors are cached; the encoder is immutable after creation.
    """

    def __init__(self, dim: int = 128, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self._bucket_key = f"bucket:{seed}".encode()[:16].ljust(16, b"\0")
        self._sign_key = f"sign:{seed}".encode()[:16].ljust(16, b"\0")
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            if token == MASK_TOKEN:
                # literal mask token contributes nothing, matching mask_flags
                vec = np.zeros(self.dim)
                self._cache[token] = vec
                return vec
            data = token.encode("utf-8")
            b = hashlib.blake2b(data, key=self._bucket_key, digest_size=8).digest()
            s = hashlib.blake2b(data, key=self._sign_key, digest_size=8).digest()
            bucket = int.from_bytes(b, "big") % self.dim
            sign = 1.0 if s[0] & 1 else -1.0
            vec = np.zeros(self.dim)
            vec[bucket] = sign
            self._cache[token] = vec
        return vec

    def accumulate(self, seq: TokenSequence) -> np.ndarray:
        """Pre-normalization sum of the unmasked token contributions."""
        acc = np.zeros(self.dim)
        for tok, masked in zip(seq.tokens, seq.mask_flags):
            if not masked:
                acc += self.token_vector(tok)
        return acc

    def encode(self, seq: TokenSequence) -> np.ndarray:
        """L2-normalized hashed embedding; fully-masked or empty input -> zero vector."""
        return normalized(self.accumulate(seq))

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        return self.encode(TokenSequence.from_tokens(tokens))

    def encode_graph(self, g) -> np.ndarray:
        """Feature matrix (num_nodes x dim) from every node's token sequence."""
        X = np.zeros((g.num_nodes, self.dim))
        for i, toks in enumerate(g.node_texts):
            X[i] = self.encode_tokens(toks)
        return X

    def word_similarity(self, a: str, b: str) -> float:
        return cosine_similarity(self.token_vector(a), self.token_vector(b))


def normalized(vec: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(vec))
    if n == 0.0:
        return np.zeros_like(vec)
    return vec / n


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a,b)/(|a||b|); 0 when either vector is zero."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def similarity_lower_bound(rho: float, gamma: float) -> float:
    """Analytic floor on text cosine similarity after replacing a fraction rho
    of tokens with candidates of plausibility at least gamma: 1 - rho^2 (1 - gamma)."""
    if not (0.0 <= rho <= 1.0 and 0.0 <= gamma <= 1.0):
        raise ValueError(f"rho and gamma must lie in [0,1], got {rho}, {gamma}")
    return 1.0 - rho * rho * (1.0 - gamma)


@dataclass(frozen=True)
class Candidate:
    """A replacement word with its generator plausibility and hashed-encoder similarity."""

    word: str
    plausibility: float
    similarity: float


class LexiconCandidateGenerator:
    """Closed-world synonym lexicon loaded from TSV `word<TAB>candidate<TAB>plausibility`.

    Entries are filtered to plausibility >= gamma; plausibility is the surrogate
    for the masked-LM conditional probability. Candidates are returned sorted by
    descending plausibility, ties broken lexicographically.
    """

    def __init__(self, entries: dict[str, list[tuple[str, float]]], encoder: HashedEncoder,
                 gamma: float = 0.5):
        self.encoder = encoder
        self.gamma = gamma
        self._entries = {w: list(cands) for w, cands in entries.items()}

    @staticmethod
    def from_tsv(path: str | Path, encoder: HashedEncoder, gamma: float = 0.5
                 ) -> "LexiconCandidateGenerator":
        entries: dict[str, list[tuple[str, float]]] = {}
        for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{ln}: expected word<TAB>candidate<TAB>plausibility")
            word, cand, p = parts[0], parts[1], float(parts[2])
            if not (0.0 < p <= 1.0):
                raise ValueError(f"{path}:{ln}: plausibility must lie in (0,1]")
            entries.setdefault(word, []).append((cand, p))
        return LexiconCandidateGenerator(entries, encoder, gamma)

    def generate(self, seq: TokenSequence, position: int, k1: int) -> list[Candidate]:
        if not (0 <= position < len(seq)) or seq.mask_flags[position]:
            raise ValueError(f"position {position} invalid or masked")
        if k1 <= 0:
            return []
        word = seq.tokens[position]
        pool = [
            (cand, p)
            for cand, p in self._entries.get(word, [])
            if cand != word and p >= self.gamma
        ]
        pool.sort(key=lambda cp: (-cp[1], cp[0]))
        return [
            Candidate(word=c, plausibility=p,
                      similarity=self.encoder.word_similarity(word, c))
            for c, p in pool[:k1]
        ]


class BridgeCandidateGenerator:
    """Candidate generator backed by an external process over NDJSON stdio.

    Request:  {"word": str, "context": [str, ...], "k": int}
    Response: {"candidates": [{"word": str, "plausibility": float}, ...]}

    One request is in flight at a time per bridge instance.
    """

    def __init__(self, command: Sequence[str], encoder: HashedEncoder, gamma: float = 0.5):
        self.encoder = encoder
        self.gamma = gamma
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def generate(self, seq: TokenSequence, position: int, k1: int) -> list[Candidate]:
        if not (0 <= position < len(seq)) or seq.mask_flags[position]:
            raise ValueError(f"position {position} invalid or masked")
        if k1 <= 0:
            return []
        word = seq.tokens[position]
        request = {"word": word, "context": list(seq.tokens), "k": k1}
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("candidate bridge process closed its stdout")
        payload = json.loads(line)
        cands = [
            (str(c["word"]), float(c["plausibility"]))
            for c in payload.get("candidates", [])
            if c["word"] != word and float(c["plausibility"]) >= self.gamma
        ]
        cands.sort(key=lambda cp: (-cp[1], cp[0]))
        return [
            Candidate(word=c, plausibility=p,
                      similarity=self.encoder.word_similarity(word, c))
            for c, p in cands[:k1]
        ]

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
