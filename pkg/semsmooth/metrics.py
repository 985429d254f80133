"""Corpus BLEU, ROUGE-1/2/L and METEOR over pre-tokenized text.

The metrics never re-tokenize: hypotheses and references are token lists as produced by
`semsmooth.corpus.tokenize`, and only token identity matters.
"""

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

from .errors import ContractError
from .smoothing import SynonymLexicon


BLEU_MAX_ORDER = 4

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

# Tried longest first; a suffix is stripped only if at least this many characters remain.
STEM_SUFFIXES = ("ing", "ed", "es", "ly", "s")
STEM_MIN_LENGTH = 3


@dataclass(frozen=True)
class ScoredPair:
    hypothesis: tuple[str, ...]
    reference: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "hypothesis", tuple(self.hypothesis))
        object.__setattr__(self, "reference", tuple(self.reference))


@dataclass(frozen=True)
class MetricReport:
    bleu: float
    rouge1: float
    rouge2: float
    rougeL: float
    meteor: float

    def __post_init__(self):
        if not 0 <= self.bleu <= 100:
            raise ContractError(f"BLEU must lie in [0, 100], got {self.bleu}")
        for name in ("rouge1", "rouge2", "rougeL", "meteor"):
            if not 0 <= getattr(self, name) <= 1:
                raise ContractError(f"{name} must lie in [0, 1], got {getattr(self, name)}")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_corpus(pairs: Sequence[ScoredPair]) -> float:
    """Corpus-level BLEU-4 in [0, 100].

    Clipped n-gram matches and candidate n-gram counts are pooled over the corpus. The m-th order
    without any match gets the precision 1 / (2^m · candidates), counting at least one candidate.
    The brevity penalty exp(1 - r/c) applies when the total hypothesis length c is below the total
    reference length r.
    """
    if not pairs:
        raise ContractError("BLEU needs at least one hypothesis/reference pair")

    hyp_length = sum(len(pair.hypothesis) for pair in pairs)
    ref_length = sum(len(pair.reference) for pair in pairs)
    if not hyp_length:
        return 0.0

    correct = [0] * BLEU_MAX_ORDER
    total = [0] * BLEU_MAX_ORDER
    for pair in pairs:
        for n in range(1, BLEU_MAX_ORDER + 1):
            hyp_ngrams = ngrams(pair.hypothesis, n)
            ref_ngrams = ngrams(pair.reference, n)
            correct[n - 1] += sum(min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items())
            total[n - 1] += sum(hyp_ngrams.values())

    if not correct[0]:
        return 0.0

    smoothing = 1
    log_precision_sum = 0.0
    for n_correct, n_total in zip(correct, total):
        if n_correct:
            precision = n_correct / n_total
        else:
            smoothing *= 2
            precision = 1 / (smoothing * max(n_total, 1))
        log_precision_sum += math.log(precision)

    if hyp_length < ref_length:
        brevity_penalty = math.exp(1 - ref_length / hyp_length)
    else:
        brevity_penalty = 1.0

    return min(100.0, 100 * brevity_penalty * math.exp(log_precision_sum / BLEU_MAX_ORDER))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence, by dynamic programming."""
    if len(b) > len(a):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge_l(pair: ScoredPair) -> tuple[float, float, float]:
    """(precision, recall, F1) of the longest common subsequence."""
    if not pair.hypothesis or not pair.reference:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(pair.hypothesis, pair.reference)
    precision = lcs / len(pair.hypothesis)
    recall = lcs / len(pair.reference)
    return precision, recall, _f1(precision, recall)


def rouge_n(pair: ScoredPair, n: int) -> tuple[float, float, float]:
    """(precision, recall, F1) of clipped n-gram overlap, for n in {1, 2}."""
    if n not in (1, 2):
        raise ContractError(f"ROUGE-N is defined here for n = 1 or 2, got {n}")

    hyp_ngrams = ngrams(pair.hypothesis, n)
    ref_ngrams = ngrams(pair.reference, n)
    if not hyp_ngrams or not ref_ngrams:
        return 0.0, 0.0, 0.0

    overlap = sum(min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items())
    precision = overlap / sum(hyp_ngrams.values())
    recall = overlap / sum(ref_ngrams.values())
    return precision, recall, _f1(precision, recall)


def stem(token: str) -> str:
    for suffix in STEM_SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= STEM_MIN_LENGTH:
            return token[: -len(suffix)]
    return token


def _alignment_stages(lexicon: Optional[SynonymLexicon]) -> list[Callable[[str, str], bool]]:
    stages = [
        lambda hyp, ref: hyp == ref,
        lambda hyp, ref: stem(hyp) == stem(ref),
    ]
    if lexicon is not None:
        stages.append(lambda hyp, ref: ref in lexicon.synonyms(hyp))
    return stages


def align(
    hypothesis: Sequence[str], reference: Sequence[str], lexicon: Optional[SynonymLexicon] = None
) -> dict[int, int]:
    """Greedy unigram alignment, hypothesis position → reference position.

    Stages run in order exact, stem, synonym; each only considers tokens left unaligned by the
    earlier ones. Within a stage, a hypothesis token prefers the reference position continuing the
    chunk of its predecessor, then the lowest free position whose next reference token matches
    the next hypothesis token, then the lowest free position.

    The one-token lookahead avoids most needless chunk breaks but doesn't guarantee the fewest
    chunks possible, which would need a search over all alignments.
    """
    alignment: dict[int, int] = {}
    used: set[int] = set()

    for matches in _alignment_stages(lexicon):
        for i, hyp_token in enumerate(hypothesis):
            if i in alignment:
                continue
            candidates = [
                j
                for j, ref_token in enumerate(reference)
                if j not in used and matches(hyp_token, ref_token)
            ]
            if not candidates:
                continue

            continuation = alignment.get(i - 1)
            if continuation is not None and continuation + 1 in candidates:
                j = continuation + 1
            else:
                j = next(
                    (
                        j
                        for j in candidates
                        if i + 1 < len(hypothesis)
                        and j + 1 < len(reference)
                        and j + 1 not in used
                        and matches(hypothesis[i + 1], reference[j + 1])
                    ),
                    candidates[0],
                )
            alignment[i] = j
            used.add(j)

    return alignment


def count_chunks(alignment: dict[int, int]) -> int:
    """Number of maximal runs contiguous and identically ordered on both sides."""
    chunks = 0
    previous = None
    for i, j in sorted(alignment.items()):
        if previous is None or (i, j) != (previous[0] + 1, previous[1] + 1):
            chunks += 1
        previous = (i, j)
    return chunks


def meteor(pair: ScoredPair, lexicon: Optional[SynonymLexicon] = None) -> float:
    """METEOR with exact, stem and synonym matching, alpha 0.9, beta 3, gamma 0.5."""
    alignment = align(pair.hypothesis, pair.reference, lexicon)
    matches = len(alignment)
    if not matches:
        return 0.0

    precision = matches / len(pair.hypothesis)
    recall = matches / len(pair.reference)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (count_chunks(alignment) / matches) ** METEOR_BETA
    return fmean * (1 - penalty)


def evaluate_run(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    lexicon: Optional[SynonymLexicon] = None,
) -> MetricReport:
    """Corpus BLEU plus macro-averaged sentence-level ROUGE-1/2/L F1 and METEOR."""
    if len(hypotheses) != len(references):
        raise ContractError(
            f"{len(hypotheses)} hypotheses for {len(references)} references"
        )
    pairs = [ScoredPair(hyp, ref) for hyp, ref in zip(hypotheses, references)]
    if not pairs:
        raise ContractError("Nothing to evaluate")

    def mean(values):
        return sum(values) / len(pairs)

    return MetricReport(
        bleu=bleu_corpus(pairs),
        rouge1=mean(rouge_n(pair, 1)[2] for pair in pairs),
        rouge2=mean(rouge_n(pair, 2)[2] for pair in pairs),
        rougeL=mean(rouge_l(pair)[2] for pair in pairs),
        meteor=mean(meteor(pair, lexicon) for pair in pairs),
    )
