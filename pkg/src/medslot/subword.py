"""Byte pair encoding: learn merge operations from word counts and apply them.

Words are split into characters with an end-of-word marker glued to the last
character (``l o w</w>``). Encoded output marks every non-final piece of a word
with the ``@@`` joiner, so ``low`` may come out as ``lo@@ w``.
"""

import heapq
import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .corpus import PROTECTED_TOKENS
from .errors import DanglingJoiner, MedslotError

EOW = "</w>"
JOINER = "@@"
HEADER = "#bpe-v1"


@dataclass(frozen=True)
class BpeModel:
    merges: tuple
    vocab: frozenset
    eow: str = EOW
    protected: frozenset = PROTECTED_TOKENS
    _ranks: dict = field(default=None, init=False, repr=False, compare=False)
    _cache: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        ranks = {}
        for i, pair in enumerate(self.merges):
            if pair in ranks:
                raise ValueError(f"duplicate merge {pair}")
            ranks[pair] = i
        object.__setattr__(self, "_ranks", ranks)
        object.__setattr__(self, "_cache", {})

    def segment(self, word):
        """Symbols of ``word`` after applying merges (eow still attached)."""
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = _split_word(word, self.eow)
        ranks = self._ranks
        while len(symbols) > 1:
            best = min(
                (ranks.get(pair, len(ranks)), pair) for pair in zip(symbols, symbols[1:])
            )
            if best[0] == len(ranks):
                break
            symbols = _merge_symbols(symbols, best[1])
        result = tuple(symbols)
        self._cache[word] = result
        return result


def _split_word(word, eow=EOW):
    return list(word[:-1]) + [word[-1] + eow]


def _merge_symbols(symbols, pair):
    left, right = pair
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _pairs(symbols):
    return Counter(zip(symbols, symbols[1:]))


def learn_bpe(word_counts, num_merges=8000):
    """Greedy most-frequent-pair merging.

    Ties go to the lexicographically smallest ``(left, right)`` pair. Learning
    stops early once no pair occurs at least twice.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    words = []
    counts = []
    vocab = set()
    for word, count in sorted(word_counts.items()):
        if count <= 0:
            raise ValueError(f"count for {word!r} must be positive")
        if not word:
            continue
        symbols = _split_word(word)
        words.append(symbols)
        counts.append(count)
        vocab.update(symbols)

    stats = Counter()
    where = defaultdict(set)
    for idx, symbols in enumerate(words):
        for pair, n in _pairs(symbols).items():
            stats[pair] += n * counts[idx]
            where[pair].add(idx)
    heap = [(-n, pair) for pair, n in stats.items()]
    heapq.heapify(heap)

    merges = []
    done = set()
    while len(merges) < num_merges and heap:
        neg, pair = heapq.heappop(heap)
        if stats.get(pair, 0) != -neg:
            continue  # stale entry
        if -neg < 2:
            break
        if pair in done:
            stats.pop(pair, None)
            continue
        done.add(pair)
        merges.append(pair)
        merged = pair[0] + pair[1]
        vocab.add(merged)
        touched = set()
        for idx in where.pop(pair, ()):
            old = words[idx]
            new = _merge_symbols(old, pair)
            if new == old:
                continue
            for p, n in _pairs(old).items():
                stats[p] -= n * counts[idx]
                touched.add(p)
            for p, n in _pairs(new).items():
                stats[p] += n * counts[idx]
                where[p].add(idx)
                touched.add(p)
            words[idx] = new
        stats.pop(pair, None)
        for p in touched:
            n = stats.get(p, 0)
            if n <= 0:
                stats.pop(p, None)
            elif p != pair:
                heapq.heappush(heap, (-n, p))
    return BpeModel(tuple(merges), frozenset(vocab))


def encode(model, tokens):
    """Split tokens into subword pieces; protected tokens pass through untouched."""
    out = []
    for tok in tokens:
        if tok in model.protected:
            out.append(tok)
            continue
        if not tok:
            raise ValueError("cannot encode an empty token")
        pieces = model.segment(tok)
        for piece in pieces[:-1]:
            out.append(piece + JOINER)
        last = pieces[-1]
        last = last[: -len(model.eow)] if last.endswith(model.eow) else last
        if last.endswith(JOINER):
            # would read as a continuation; move the final "@" into its own piece
            out += [last[:-1] + JOINER, last[-1]]
        else:
            out.append(last)
    return out


def decode(model, subwords, strict=True):
    """Join ``@@``-marked pieces back into tokens.

    A trailing joiner raises :class:`DanglingJoiner`; ``strict=False`` keeps
    the partial word instead (useful on raw model output).
    """
    del model  # the joiner convention alone determines decoding
    out = []
    partial = []
    for piece in subwords:
        if piece.endswith(JOINER):
            partial.append(piece[: -len(JOINER)])
        else:
            partial.append(piece)
            out.append("".join(partial))
            partial = []
    if partial:
        if strict:
            raise DanglingJoiner(f"sequence ends inside a word: {''.join(partial)!r}")
        out.append("".join(partial))
    return out


def count_words(token_lists, protected=PROTECTED_TOKENS):
    counts = Counter()
    for tokens in token_lists:
        counts.update(t for t in tokens if t not in protected)
    return counts


def save_merges(model, fh):
    fh.write(f"{HEADER} {len(model.merges)}\n")
    for left, right in model.merges:
        fh.write(f"{left} {right}\n")


def load_merges(fh):
    header = fh.readline().split()
    if len(header) != 2 or header[0] != HEADER:
        raise MedslotError(f"not a merges file (header {' '.join(header)!r})")
    expected = int(header[1])
    merges = []
    vocab = set()
    for line_no, line in enumerate(fh, 2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MedslotError(f"merges line {line_no}: expected 'left right'")
        merges.append((parts[0], parts[1]))
        vocab.update((parts[0], parts[1], parts[0] + parts[1]))
    if len(merges) != expected:
        raise MedslotError(f"merges file declares {expected} merges, found {len(merges)}")
    return BpeModel(tuple(merges), frozenset(vocab))


def merges_to_text(model):
    lines = [f"{HEADER} {len(model.merges)}"] + [f"{a} {b}" for a, b in model.merges]
    return "\n".join(lines) + "\n"


def merges_from_text(text):
    return load_merges(io.StringIO(text))
