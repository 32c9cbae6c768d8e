"""Evaluation: diversity metrics and deterministic oracle scoring.

distinct-n follows the count-of-distinct-ngrams over total-ngrams reading
by default; the alternative total-tokens denominator (under which the
bigram ratio may exceed 1) is available behind a flag.

The oracles only make sense on synthetic corpora, where keyword lexicons
and templates are known by construction. Sentiment scoring classifies
post and response by lexicon hits and fails a response only on a
configured emotion collision; a response with no keywords at all gets the
benefit of the doubt and is tallied as unclassified. Semantic scoring asks
whether the response instantiates any response template admissible for the
post's template family. On corpora without an oracle only distinct-n and
the label-based interaction matrix are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import (EMOTION_INDEX, EMOTIONS, SyntheticSpec, TemplateFamily,
                     DEFAULT_FAMILIES, DEFAULT_LEXICONS, eip_csv, find_post_family,
                     matches_template)
from .model import ChatModel

DEFAULT_COLLISIONS = frozenset({
    ("Angry", "Happy"), ("Happy", "Angry"),
    ("Disgust", "Like"), ("Like", "Disgust"),
    ("Sad", "Happy"), ("Happy", "Sad"),
})


def distinct_n(responses, n: int, per_token: bool = False) -> float:
    """Distinct n-grams over total n-grams across all responses.

    per_token switches the denominator to the total token count. Empty
    input (or input with no n-grams) scores 0.0.
    """
    if n <= 0:
        raise ValueError(f"distinct_n: n must be positive, got {n}")
    seen = set()
    total_ngrams = 0
    total_tokens = 0
    for tokens in responses:
        tokens = tuple(tokens)
        total_tokens += len(tokens)
        for i in range(len(tokens) - n + 1):
            seen.add(tokens[i:i + n])
            total_ngrams += 1
    denom = total_tokens if per_token else total_ngrams
    if denom == 0:
        return 0.0
    return len(seen) / denom


@dataclass
class EmotionOracle:
    """Keyword and template knowledge for scoring synthetic conversations."""

    lexicons: dict = field(default_factory=lambda: dict(DEFAULT_LEXICONS))
    families: tuple = DEFAULT_FAMILIES
    collisions: frozenset = DEFAULT_COLLISIONS

    @classmethod
    def from_spec(cls, spec: SyntheticSpec, collisions: frozenset = DEFAULT_COLLISIONS) -> "EmotionOracle":
        return cls(lexicons=dict(spec.lexicons), families=spec.families, collisions=collisions)

    def __post_init__(self):
        self._word_to_category = {}
        for cat, words in self.lexicons.items():
            for w in words:
                self._word_to_category[w] = cat

    def hit_categories(self, tokens) -> set[str]:
        return {self._word_to_category[t] for t in tokens if t in self._word_to_category}

    def classify(self, tokens) -> str | None:
        """Majority lexicon category, canonical-order tie-break; None if no hits."""
        counts = {}
        for t in tokens:
            cat = self._word_to_category.get(t)
            if cat is not None:
                counts[cat] = counts.get(cat, 0) + 1
        if not counts:
            return None
        best = max(counts.values())
        for name in EMOTIONS:
            if counts.get(name) == best:
                return name
        return None


def sentiment_score(response, post, oracle: EmotionOracle) -> int:
    """1 unless some detected response emotion collides with the post's emotion."""
    post_cat = oracle.classify(post) or "Other"
    for resp_cat in oracle.hit_categories(response):
        if (post_cat, resp_cat) in oracle.collisions:
            return 0
    return 1


def semantic_score(response, post, oracle: EmotionOracle) -> int:
    """1 iff the response instantiates a template admissible for the post's family."""
    family_index = find_post_family(post, oracle.families)
    if family_index is None:
        raise ValueError(f"semantic_score: post {' '.join(post)!r} matches no known template")
    family: TemplateFamily = oracle.families[family_index]
    return int(any(matches_template(response, t) for t in family.responses))


def response_quality(sentiment: int, semantic: int) -> int:
    """Conjunction: a good response is right on both axes."""
    for name, value in (("sentiment", sentiment), ("semantic", semantic)):
        if value not in (0, 1):
            raise ValueError(f"response_quality: {name} score must be 0 or 1, got {value!r}")
    return sentiment & semantic


@dataclass
class EvalReport:
    n_responses: int
    distinct1: float
    distinct2: float
    eip: np.ndarray
    eip_source: str  # "generated" or "labels"
    mean_sentiment: float | None = None
    mean_semantic: float | None = None
    mean_quality: float | None = None
    pct_both: float | None = None  # sentiment 1, semantic 1
    pct_sent_only: float | None = None
    pct_sem_only: float | None = None
    pct_neither: float | None = None
    unclassified: int | None = None
    rows: list = field(default_factory=list)  # (sentiment, semantic, post text, response text)

    def to_text(self) -> str:
        lines = [
            f"responses {self.n_responses}",
            f"distinct_1 {self.distinct1:.6f}",
            f"distinct_2 {self.distinct2:.6f}",
            f"eip_source {self.eip_source}",
        ]
        if self.mean_sentiment is not None:
            lines += [
                f"mean_sentiment {self.mean_sentiment:.6f}",
                f"mean_semantic {self.mean_semantic:.6f}",
                f"mean_quality {self.mean_quality:.6f}",
                f"pct_both {self.pct_both:.2f}",
                f"pct_sentiment_only {self.pct_sent_only:.2f}",
                f"pct_semantic_only {self.pct_sem_only:.2f}",
                f"pct_neither {self.pct_neither:.2f}",
                f"unclassified_responses {self.unclassified}",
            ]
        return "\n".join(lines) + "\n"

    def responses_text(self) -> str:
        lines = []
        for sentiment, semantic, post, response in self.rows:
            s = "-" if sentiment is None else str(sentiment)
            m = "-" if semantic is None else str(semantic)
            lines.append(f"{s} {m} {post} -> {response}")
        return "\n".join(lines) + "\n"


def evaluate(model: ChatModel, pairs, oracle: EmotionOracle | None = None,
             max_len: int | None = None) -> EvalReport:
    """Greedy-decode every post and score the generations.

    Deterministic: same model, pairs, and oracle give the same report.
    """
    if not pairs:
        raise ValueError("evaluate: empty test corpus")
    vocab = model.vocab
    decoded = []
    rows = []
    sent_scores = []
    sem_scores = []
    unclassified = 0
    eip = np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=np.int64)
    for pair in pairs:
        ids, _ = model.respond(pair.post, designated=pair.response_labels[0], max_len=max_len)
        tokens = vocab.decode(ids)
        decoded.append(tokens)
        post_text = " ".join(pair.post_tokens)
        if oracle is None:
            eip[EMOTION_INDEX[pair.post_labels[0]], EMOTION_INDEX[pair.response_labels[0]]] += 1
            rows.append((None, None, post_text, " ".join(tokens)))
            continue
        s_sent = sentiment_score(tokens, pair.post_tokens, oracle)
        s_sem = semantic_score(tokens, pair.post_tokens, oracle)
        if oracle.classify(tokens) is None:
            unclassified += 1
        sent_scores.append(s_sent)
        sem_scores.append(s_sem)
        generated_cat = oracle.classify(tokens) or "Other"
        eip[EMOTION_INDEX[pair.post_labels[0]], EMOTION_INDEX[generated_cat]] += 1
        rows.append((s_sent, s_sem, post_text, " ".join(tokens)))

    report = EvalReport(
        n_responses=len(pairs),
        distinct1=distinct_n(decoded, 1),
        distinct2=distinct_n(decoded, 2),
        eip=eip,
        eip_source="labels" if oracle is None else "generated",
        rows=rows,
    )
    if oracle is not None:
        n = len(pairs)
        report.mean_sentiment = sum(sent_scores) / n
        report.mean_semantic = sum(sem_scores) / n
        report.mean_quality = sum(response_quality(a, b) for a, b in zip(sent_scores, sem_scores)) / n
        cells = {(1, 1): 0, (1, 0): 0, (0, 1): 0, (0, 0): 0}
        for a, b in zip(sent_scores, sem_scores):
            cells[(a, b)] += 1
        report.pct_both = 100.0 * cells[(1, 1)] / n
        report.pct_sent_only = 100.0 * cells[(1, 0)] / n
        report.pct_sem_only = 100.0 * cells[(0, 1)] / n
        report.pct_neither = 100.0 * cells[(0, 0)] / n
        report.unclassified = unclassified
    return report


def write_report(report: EvalReport, out_dir) -> None:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "eip.csv").write_text(eip_csv(report.eip), encoding="utf-8")
    (out / "responses.txt").write_text(report.responses_text(), encoding="utf-8")
