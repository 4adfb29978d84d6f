"""Small word-level neural providers trained in-process on a caller-supplied
corpus: a masked language model for candidate prediction and attacker duty,
a causal LM surrogate for QA-style gradient feedback, and a classifier
surrogate for label tasks.

These are real differentiable models (a few hundred thousand parameters),
small enough to train on CPU in under a minute, which keeps the whole stack
runnable offline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..core import tokenize
from ..errors import OutOfVocabulary
from ..surrogate import TaskTarget

PAD, UNK, MASK = "<pad>", "<unk>", "MASKTOK"
_SPECIALS = (PAD, UNK, MASK)


@dataclass(frozen=True)
class WordVocab:
    tokens: tuple[str, ...]
    index: dict[str, int]

    @staticmethod
    def build(sentences: list[str], min_count: int = 1) -> "WordVocab":
        counts: dict[str, int] = {}
        for sentence in sentences:
            for token in tokenize(sentence).tokens:
                counts[token] = counts.get(token, 0) + 1
        words = sorted(t for t, c in counts.items() if c >= min_count and t not in _SPECIALS)
        tokens = tuple(_SPECIALS) + tuple(words)
        return WordVocab(tokens=tokens, index={t: i for i, t in enumerate(tokens)})

    def encode(self, words: list[str]) -> list[int]:
        unk = self.index[UNK]
        return [self.index.get(w, unk) for w in words]

    def __len__(self) -> int:
        return len(self.tokens)


def _pad_batch(sequences: list[list[int]], pad_id: int) -> torch.Tensor:
    width = max(len(s) for s in sequences)
    return torch.tensor([s + [pad_id] * (width - len(s)) for s in sequences], dtype=torch.long)


class _MlmNet(nn.Module):
    # Embeddings start small so the tied output head, not the random init,
    # dominates the final geometry; interchangeable words then cluster.
    INIT_SCALE = 0.25

    def __init__(self, vocab_size: int, dim: int, max_len: int):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim)
        self.positions = nn.Embedding(max_len, dim)
        with torch.no_grad():
            self.embedding.weight.mul_(self.INIT_SCALE)
        layer = nn.TransformerEncoderLayer(
            d_model=dim, nhead=4, dim_feedforward=2 * dim, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=2, enable_nested_tensor=False)
        self.bias = nn.Parameter(torch.zeros(vocab_size))
        self.max_len = max_len

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        hidden = self.encoder(
            self.embedding(ids) + self.positions(pos), src_key_padding_mask=pad_mask
        )
        # Tied output head: interchangeable words end up with nearby embeddings.
        return hidden @ self.embedding.weight.T + self.bias


class TinyMlmProvider:
    """A trained word-level masked LM exposing the fill-mask contract."""

    def __init__(self, net: _MlmNet, vocab: WordVocab, model_id: str = "tiny-mlm"):
        self.model_id = model_id
        self.mask_token = MASK
        self._net = net.eval()
        self._vocab = vocab
        self._word_set = frozenset(t for t in vocab.tokens if t not in _SPECIALS)

    @property
    def vocabulary(self) -> frozenset[str]:
        return self._word_set

    @torch.no_grad()
    def fill_mask(self, context_text: str, mask_marker: str, top_n: int) -> list[tuple[str, float]]:
        words = list(tokenize(context_text).tokens)[: self._net.max_len]
        if mask_marker not in words:
            raise ValueError(f"mask marker {mask_marker!r} not found in context")
        position = words.index(mask_marker)
        ids = torch.tensor([self._vocab.encode(words)], dtype=torch.long)
        logits = self._net(ids, pad_mask=torch.zeros_like(ids, dtype=torch.bool))[0, position]
        log_probs = torch.log_softmax(logits, dim=-1)
        order = torch.argsort(log_probs, descending=True, stable=True)
        out = []
        for idx in order.tolist():
            token = self._vocab.tokens[idx]
            if token in _SPECIALS:
                continue
            out.append((token, float(log_probs[idx])))
            if len(out) >= top_n:
                break
        return out

    def embedding(self, token: str) -> np.ndarray:
        if token not in self._word_set:
            raise OutOfVocabulary(f"{token!r} not in {self.model_id} vocabulary")
        with torch.no_grad():
            row = self._net.embedding.weight[self._vocab.index[token]]
        return row.detach().numpy().astype(np.float64)


def train_tiny_mlm(
    sentences: list[str],
    dim: int = 48,
    epochs: int = 40,
    batch_size: int = 64,
    mask_rate: float = 0.15,
    seed: int = 0,
    max_len: int = 128,
) -> TinyMlmProvider:
    """Standard masked-token training over a word-level vocabulary."""
    torch.manual_seed(seed)
    vocab = WordVocab.build(sentences)
    net = _MlmNet(len(vocab), dim, max_len)
    optimizer = torch.optim.Adam(net.parameters(), lr=3e-3)
    pad_id, mask_id = vocab.index[PAD], vocab.index[MASK]
    encoded = [vocab.encode(list(tokenize(s).tokens))[:max_len] for s in sentences]
    encoded = [e for e in encoded if len(e) >= 2]
    generator = torch.Generator().manual_seed(seed)

    net.train()
    for _epoch in range(epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), batch_size):
            batch = [encoded[i] for i in order[start : start + batch_size]]
            ids = _pad_batch(batch, pad_id)
            pad_mask = ids == pad_id
            scores = torch.rand(ids.shape, generator=generator)
            scores[pad_mask] = 2.0
            masked = scores < mask_rate
            # Guarantee one masked position per sequence.
            fallback = scores.argmin(dim=1)
            masked[torch.arange(ids.shape[0]), fallback] = True
            masked &= ~pad_mask
            targets = torch.where(masked, ids, torch.full_like(ids, -100))
            corrupted = torch.where(masked, torch.full_like(ids, mask_id), ids)
            logits = net(corrupted, pad_mask)
            loss = nn.functional.cross_entropy(
                logits.reshape(-1, len(vocab)), targets.reshape(-1), ignore_index=-100
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    return TinyMlmProvider(net, vocab)


class _CausalNet(nn.Module):
    def __init__(self, vocab_size: int, dim: int, hidden: int):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim)
        self.rnn = nn.GRU(dim, hidden, batch_first=True)
        self.head = nn.Linear(hidden, vocab_size)

    def forward_from_embeddings(self, embedded: torch.Tensor) -> torch.Tensor:
        output, _ = self.rnn(embedded)
        return self.head(output)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.forward_from_embeddings(self.embedding(ids))


class TinyCausalSurrogate:
    """A trained word-level causal LM exposing loss and input gradients.

    The loss is the negative log-likelihood of a reference continuation;
    gradients are taken at the input embeddings of the prompt tokens only.
    """

    kind = "general"

    def __init__(self, net: _CausalNet, vocab: WordVocab, model_id: str = "tiny-causal-lm"):
        self.model_id = model_id
        self._net = net.eval()
        self._vocab = vocab

    def _split_ids(self, prompt_text: str, target: TaskTarget) -> tuple[list[int], list[int]]:
        if target.kind != "reference_text":
            raise ValueError("general surrogate scores reference_text targets only")
        prompt_ids = self._vocab.encode(list(tokenize(prompt_text).tokens))
        target_ids = self._vocab.encode(list(tokenize(str(target.value)).tokens))
        if not prompt_ids or not target_ids:
            raise ValueError("prompt and target must both tokenize to words")
        return prompt_ids, target_ids

    def _nll(self, prompt_ids: list[int], target_ids: list[int], embedded: torch.Tensor) -> torch.Tensor:
        logits = self._net.forward_from_embeddings(embedded.unsqueeze(0))[0]
        total = len(prompt_ids) + len(target_ids)
        log_probs = torch.log_softmax(logits[: total - 1], dim=-1)
        next_ids = torch.tensor(prompt_ids[1:] + target_ids, dtype=torch.long)
        # Only the continuation counts toward the loss.
        picked = log_probs[torch.arange(total - 1), next_ids][len(prompt_ids) - 1 :]
        return -picked.mean()

    def loss(self, prompt_text: str, target: TaskTarget) -> float:
        prompt_ids, target_ids = self._split_ids(prompt_text, target)
        ids = torch.tensor(prompt_ids + target_ids, dtype=torch.long)
        with torch.no_grad():
            value = self._nll(prompt_ids, target_ids, self._net.embedding(ids))
        return float(value)

    def input_gradient(self, prompt_text: str, target: TaskTarget) -> np.ndarray:
        prompt_ids, target_ids = self._split_ids(prompt_text, target)
        ids = torch.tensor(prompt_ids + target_ids, dtype=torch.long)
        embedded = self._net.embedding(ids).detach().clone().requires_grad_(True)
        self._net.zero_grad(set_to_none=True)
        self._nll(prompt_ids, target_ids, embedded).backward()
        grad = embedded.grad[: len(prompt_ids)]
        return grad.detach().numpy().astype(np.float64)

    @torch.no_grad()
    def derive_target(self, prompt_text: str, length: int = 6) -> TaskTarget:
        """Greedy continuation of the prompt; the behavior to preserve."""
        ids = self._vocab.encode(list(tokenize(prompt_text).tokens))
        if not ids:
            raise ValueError("cannot derive a target for an empty prompt")
        specials = {self._vocab.index[t] for t in _SPECIALS}
        generated: list[str] = []
        for _ in range(length):
            logits = self._net(torch.tensor([ids], dtype=torch.long))[0, -1]
            for idx in torch.argsort(logits, descending=True, stable=True).tolist():
                if idx not in specials:
                    ids.append(idx)
                    generated.append(self._vocab.tokens[idx])
                    break
        return TaskTarget("reference_text", " ".join(generated))

    def token_char_spans(self, prompt_text: str) -> list[tuple[int, int]]:
        return list(tokenize(prompt_text).spans)


def train_tiny_causal_lm(
    sentences: list[str],
    dim: int = 32,
    hidden: int = 64,
    epochs: int = 20,
    batch_size: int = 64,
    seed: int = 0,
) -> TinyCausalSurrogate:
    torch.manual_seed(seed)
    vocab = WordVocab.build(sentences)
    net = _CausalNet(len(vocab), dim, hidden)
    optimizer = torch.optim.Adam(net.parameters(), lr=3e-3)
    pad_id = vocab.index[PAD]
    encoded = [vocab.encode(list(tokenize(s).tokens)) for s in sentences]
    encoded = [e for e in encoded if len(e) >= 3]
    generator = torch.Generator().manual_seed(seed)

    net.train()
    for _epoch in range(epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), batch_size):
            batch = [encoded[i] for i in order[start : start + batch_size]]
            ids = _pad_batch(batch, pad_id)
            logits = net(ids[:, :-1])
            targets = ids[:, 1:].reshape(-1)
            loss = nn.functional.cross_entropy(
                logits.reshape(-1, len(vocab)), targets, ignore_index=pad_id
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    return TinyCausalSurrogate(net, vocab)


class _ClassifierNet(nn.Module):
    def __init__(self, vocab_size: int, dim: int, hidden: int, n_labels: int):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.Tanh(), nn.Linear(hidden, n_labels))

    def forward_from_embeddings(self, embedded: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        pooled = embedded.sum(dim=1) / lengths.unsqueeze(1)
        return self.mlp(pooled)


class TinyClassifierSurrogate:
    """A trained mean-pool classifier for class-label gradient feedback."""

    kind = "task_specific"

    def __init__(self, net: _ClassifierNet, vocab: WordVocab, labels: tuple[str, ...], model_id: str = "tiny-classifier"):
        self.model_id = model_id
        self._net = net.eval()
        self._vocab = vocab
        self.labels = labels

    def _label_id(self, target: TaskTarget) -> int:
        if target.kind != "class_label":
            raise ValueError("classifier surrogate scores class_label targets only")
        try:
            return self.labels.index(str(target.value))
        except ValueError as exc:
            raise ValueError(f"unknown label {target.value!r}") from exc

    def _embedded(self, prompt_text: str) -> torch.Tensor:
        ids = self._vocab.encode(list(tokenize(prompt_text).tokens))
        if not ids:
            raise ValueError("cannot classify an empty prompt")
        return self._net.embedding(torch.tensor([ids], dtype=torch.long))

    def loss(self, prompt_text: str, target: TaskTarget) -> float:
        label = torch.tensor([self._label_id(target)])
        with torch.no_grad():
            embedded = self._embedded(prompt_text)
            logits = self._net.forward_from_embeddings(
                embedded, torch.tensor([embedded.shape[1]], dtype=torch.float)
            )
            return float(nn.functional.cross_entropy(logits, label))

    def input_gradient(self, prompt_text: str, target: TaskTarget) -> np.ndarray:
        label = torch.tensor([self._label_id(target)])
        embedded = self._embedded(prompt_text).detach().clone().requires_grad_(True)
        logits = self._net.forward_from_embeddings(
            embedded, torch.tensor([embedded.shape[1]], dtype=torch.float)
        )
        self._net.zero_grad(set_to_none=True)
        nn.functional.cross_entropy(logits, label).backward()
        return embedded.grad[0].detach().numpy().astype(np.float64)

    @torch.no_grad()
    def derive_target(self, prompt_text: str) -> TaskTarget:
        embedded = self._embedded(prompt_text)
        logits = self._net.forward_from_embeddings(
            embedded, torch.tensor([embedded.shape[1]], dtype=torch.float)
        )
        return TaskTarget("class_label", self.labels[int(logits.argmax())])

    def token_char_spans(self, prompt_text: str) -> list[tuple[int, int]]:
        return list(tokenize(prompt_text).spans)


def train_tiny_classifier(
    examples: list[tuple[str, str]],
    dim: int = 32,
    hidden: int = 32,
    epochs: int = 30,
    batch_size: int = 64,
    seed: int = 0,
) -> TinyClassifierSurrogate:
    torch.manual_seed(seed)
    labels = tuple(sorted({label for _, label in examples}))
    vocab = WordVocab.build([text for text, _ in examples])
    net = _ClassifierNet(len(vocab), dim, hidden, len(labels))
    optimizer = torch.optim.Adam(net.parameters(), lr=3e-3)
    pad_id = vocab.index[PAD]
    encoded = [
        (vocab.encode(list(tokenize(text).tokens)), labels.index(label))
        for text, label in examples
        if tokenize(text).tokens
    ]
    generator = torch.Generator().manual_seed(seed)

    net.train()
    for _epoch in range(epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), batch_size):
            batch = [encoded[i] for i in order[start : start + batch_size]]
            ids = _pad_batch([b[0] for b in batch], pad_id)
            lengths = torch.tensor([len(b[0]) for b in batch], dtype=torch.float)
            embedded = net.embedding(ids) * (ids != pad_id).unsqueeze(-1)
            logits = net.forward_from_embeddings(embedded, lengths)
            loss = nn.functional.cross_entropy(
                logits, torch.tensor([b[1] for b in batch], dtype=torch.long)
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    return TinyClassifierSurrogate(net, vocab, labels)
