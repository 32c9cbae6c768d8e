"""Conversation corpora: loading, labels, vocabulary, synthetic generation.

Corpus files are UTF-8 with one JSON record per line, keys post, response,
post_labels, response_labels. Labels are (primary, secondary) pairs drawn
from the six canonical categories; emotion vectors are length-6 float
arrays in canonical category order. Tokenization is whitespace splitting.

The synthetic generator fills slotted templates with per-category keywords
so that tiny corpora carry a recoverable post-emotion -> response-emotion
mapping. Everything about a generated response is a deterministic function
of its post, so repeated posts never contradict each other and exact
overfitting is possible.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMOTIONS = ("Angry", "Disgust", "Happy", "Like", "Sad", "Other")
EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}

PAD_ID, UNK_ID, SOS_ID, EOS_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<sos>", "<eos>")

SLOT = "{kw}"


def check_emotion(name: str, where: str = "") -> str:
    if name not in EMOTION_INDEX:
        suffix = f" ({where})" if where else ""
        raise ValueError(f"unknown emotion label {name!r}{suffix}; expected one of {list(EMOTIONS)}")
    return name


def multi_hot(primary: str, secondary: str = "Other") -> np.ndarray:
    """Encode a (primary, secondary) label pair as a length-6 multi-hot vector.

    Other is the no-emotion marker: its bit is set only when no real emotion
    is present, and duplicate labels collapse to one bit.
    """
    check_emotion(primary)
    check_emotion(secondary)
    active = {primary, secondary} - {"Other"}
    vec = np.zeros(len(EMOTIONS), dtype=np.float32)
    if not active:
        vec[EMOTION_INDEX["Other"]] = 1.0
    else:
        for name in active:
            vec[EMOTION_INDEX[name]] = 1.0
    return vec


class Vocabulary:
    """Token <-> id mapping with the four reserved ids 0..3.

    Regular tokens are ordered by descending corpus frequency with
    lexicographic tie-breaks, so a rebuilt vocabulary is reproducible.
    """

    def __init__(self, tokens: list[str]):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS) + list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary contains duplicate tokens")

    @classmethod
    def build(cls, token_counts: Counter, cap: int) -> "Vocabulary":
        if cap <= len(SPECIAL_TOKENS):
            raise ValueError(f"vocabulary cap {cap} leaves no room beyond the {len(SPECIAL_TOKENS)} reserved ids")
        ranked = sorted(token_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        keep = [tok for tok, _ in ranked[: cap - len(SPECIAL_TOKENS)]]
        return cls(keep)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens) -> tuple[int, ...]:
        return tuple(self.token_to_id.get(t, UNK_ID) for t in tokens)

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]


@dataclass(frozen=True)
class ConversationPair:
    """One post/response exchange, tokenized and id-encoded."""

    post_tokens: tuple[str, ...]
    response_tokens: tuple[str, ...]
    post: tuple[int, ...]
    response: tuple[int, ...]
    post_labels: tuple[str, str]
    response_labels: tuple[str, str]


def _parse_labels(value, key: str, lineno: int) -> tuple[str, str]:
    if (not isinstance(value, list)) or len(value) != 2 or not all(isinstance(v, str) for v in value):
        raise ValueError(f"line {lineno}: {key} must be a [primary, secondary] pair of emotion names")
    for name in value:
        if name not in EMOTION_INDEX:
            raise ValueError(
                f"line {lineno}: unknown emotion label {name!r} in {key}; expected one of {list(EMOTIONS)}")
    return value[0], value[1]


def parse_record(line: str, lineno: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"line {lineno}: malformed record: {exc}") from exc
    if not isinstance(record, dict):
        raise ValueError(f"line {lineno}: malformed record: expected an object")
    for key in ("post", "response", "post_labels", "response_labels"):
        if key not in record:
            raise ValueError(f"line {lineno}: missing key {key!r}")
    for key in ("post", "response"):
        if not isinstance(record[key], str) or not record[key].split():
            raise ValueError(f"line {lineno}: {key} must be a non-empty string")
    _parse_labels(record["post_labels"], "post_labels", lineno)
    _parse_labels(record["response_labels"], "response_labels", lineno)
    return record


def read_records(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_record(line, lineno))
    if not records:
        raise ValueError(f"corpus {path} contains no records")
    return records


def pairs_from_records(records: list[dict], vocab: Vocabulary | None = None,
                       vocab_cap: int = 200, max_len: int = 50) -> tuple[list[ConversationPair], Vocabulary]:
    """Tokenize records into pairs; build a vocabulary unless one is supplied.

    Sequences are truncated to max_len tokens. Order follows the input.
    """
    if vocab is None:
        counts: Counter = Counter()
        for rec in records:
            counts.update(rec["post"].split())
            counts.update(rec["response"].split())
        vocab = Vocabulary.build(counts, vocab_cap)
    pairs = []
    for rec in records:
        post_tokens = tuple(rec["post"].split()[:max_len])
        response_tokens = tuple(rec["response"].split()[:max_len])
        pairs.append(ConversationPair(
            post_tokens=post_tokens,
            response_tokens=response_tokens,
            post=vocab.encode(post_tokens),
            response=vocab.encode(response_tokens),
            post_labels=(rec["post_labels"][0], rec["post_labels"][1]),
            response_labels=(rec["response_labels"][0], rec["response_labels"][1]),
        ))
    return pairs, vocab


def load_corpus(path, vocab: Vocabulary | None = None, vocab_cap: int = 200,
                max_len: int = 50) -> tuple[list[ConversationPair], Vocabulary]:
    """Load a corpus file; see pairs_from_records for the conversion rules."""
    return pairs_from_records(read_records(path), vocab, vocab_cap, max_len)


def write_corpus(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            ordered = {key: rec[key] for key in ("post", "response", "post_labels", "response_labels")}
            fh.write(json.dumps(ordered, ensure_ascii=False) + "\n")


# --- templates ----------------------------------------------------------------


@dataclass(frozen=True)
class TemplateFamily:
    """Slotted post patterns and the response patterns admissible for them."""

    name: str
    posts: tuple[tuple[str, ...], ...]
    responses: tuple[tuple[str, ...], ...]


def _t(text: str) -> tuple[str, ...]:
    return tuple(text.split())


DEFAULT_FAMILIES = (
    TemplateFamily(
        "trip",
        posts=(_t("the trip made me feel {kw} today"),
               _t("honestly that trip left me {kw}")),
        responses=(_t("a trip like that sounds {kw}"),
                   _t("hearing about your trip makes me {kw}"),
                   _t("that journey seems really {kw}")),
    ),
    TemplateFamily(
        "movie",
        posts=(_t("watching this movie felt {kw} somehow"),
               _t("this movie was {kw} from the start")),
        responses=(_t("the film you watched sounds {kw}"),
                   _t("i hear the movie was {kw}"),
                   _t("such films leave me {kw}")),
    ),
    TemplateFamily(
        "dinner",
        posts=(_t("dinner with them turned {kw} quickly"),
               _t("the dinner tonight seemed {kw} to everyone")),
        responses=(_t("meals like that sound {kw}"),
                   _t("your dinner story makes me {kw}"),
                   _t("what a {kw} meal that must have been")),
    ),
    TemplateFamily(
        "weather",
        posts=(_t("this weather keeps me {kw} all week"),
               _t("the weather outside is {kw} again")),
        responses=(_t("weather like this feels {kw} to me"),
                   _t("the sky does look {kw} lately"),
                   _t("forecast says more {kw} days ahead")),
    ),
)

# Compact variants of the same four families. Posts are four tokens long, so
# the keyword carries a quarter of each post instead of a seventh; models pick
# up the keyword-category signal in far fewer updates, which keeps training
# demos and timed checks fast.
SHORT_FAMILIES = (
    TemplateFamily(
        "trip",
        posts=(_t("the trip was {kw}"), _t("that trip felt {kw}")),
        responses=(_t("your trip sounds {kw}"),
                   _t("trips get {kw} sometimes"),
                   _t("a {kw} trip indeed")),
    ),
    TemplateFamily(
        "movie",
        posts=(_t("this movie was {kw}"), _t("the movie felt {kw}")),
        responses=(_t("the film sounds {kw}"),
                   _t("movies turn {kw} sometimes"),
                   _t("a {kw} film indeed")),
    ),
    TemplateFamily(
        "dinner",
        posts=(_t("the dinner was {kw}"), _t("that meal felt {kw}")),
        responses=(_t("your dinner sounds {kw}"),
                   _t("meals get {kw} sometimes"),
                   _t("a {kw} meal indeed")),
    ),
    TemplateFamily(
        "weather",
        posts=(_t("the weather is {kw}"), _t("this sky felt {kw}")),
        responses=(_t("the forecast sounds {kw}"),
                   _t("skies turn {kw} sometimes"),
                   _t("a {kw} sky indeed")),
    ),
)

TEMPLATE_SETS = {
    "default": DEFAULT_FAMILIES,
    "short": SHORT_FAMILIES,
}

DEFAULT_LEXICONS = {
    "Angry": ("furious", "livid", "outraged", "seething"),
    "Disgust": ("gross", "nasty", "revolting", "foul"),
    "Happy": ("glad", "thrilled", "cheerful", "delighted"),
    "Like": ("fond", "charming", "lovely", "admirable"),
    "Sad": ("gloomy", "tearful", "mournful", "downcast"),
    "Other": ("okay", "ordinary", "routine", "usual"),
}

DEFAULT_MAPPING = {
    "Angry": "Disgust",
    "Disgust": "Angry",
    "Happy": "Like",
    "Like": "Happy",
    "Sad": "Other",
    "Other": "Other",
}


def matches_template(tokens, template: tuple[str, ...]) -> bool:
    """Positional match with the slot standing for exactly one arbitrary token."""
    if len(tokens) != len(template):
        return False
    return all(pat == SLOT or pat == tok for tok, pat in zip(tokens, template))


def find_post_family(tokens, families=DEFAULT_FAMILIES) -> int | None:
    for i, family in enumerate(families):
        if any(matches_template(tokens, t) for t in family.posts):
            return i
    return None


def fill_template(template: tuple[str, ...], keyword: str) -> tuple[str, ...]:
    return tuple(keyword if t == SLOT else t for t in template)


@dataclass
class SyntheticSpec:
    """Recipe for a deterministic synthetic corpus."""

    pairs: int = 2000
    seed: int = 7
    mapping: dict = field(default_factory=lambda: dict(DEFAULT_MAPPING))
    lexicons: dict = field(default_factory=lambda: dict(DEFAULT_LEXICONS))
    families: tuple = DEFAULT_FAMILIES

    def validate(self) -> None:
        if self.pairs <= 0:
            raise ValueError(f"synthetic spec: pairs must be positive, got {self.pairs}")
        for name in EMOTIONS:
            if name not in self.mapping:
                raise ValueError(f"synthetic spec: mapping missing category {name!r}")
        for src, dst in self.mapping.items():
            check_emotion(src, "mapping key")
            check_emotion(dst, f"mapping value for {src}")
        seen: dict[str, str] = {}
        for name in EMOTIONS:
            words = tuple(self.lexicons.get(name, ()))
            if not words:
                raise ValueError(f"synthetic spec: empty lexicon for category {name!r}")
            for w in words:
                if w in seen:
                    raise ValueError(
                        f"synthetic spec: keyword {w!r} appears in both {seen[w]} and {name} lexicons")
                seen[w] = name
        if not self.families:
            raise ValueError("synthetic spec: no template families")
        for family in self.families:
            for template in family.posts + family.responses:
                if sum(1 for t in template if t == SLOT) != 1:
                    raise ValueError(
                        f"synthetic spec: template {' '.join(template)!r} must contain exactly one {SLOT}")


def generate_synthetic(spec: SyntheticSpec) -> list[dict]:
    """Sample records from a recipe; identical recipes yield identical corpora.

    The response template, its keyword, and its category are all functions
    of the sampled post, never of fresh randomness.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    records = []
    for _ in range(spec.pairs):
        post_cat = EMOTIONS[int(rng.integers(len(EMOTIONS)))]
        family_i = int(rng.integers(len(spec.families)))
        family = spec.families[family_i]
        post_variant = int(rng.integers(len(family.posts)))
        post_lex = spec.lexicons[post_cat]
        kw_i = int(rng.integers(len(post_lex)))
        post = fill_template(family.posts[post_variant], post_lex[kw_i])

        resp_cat = spec.mapping[post_cat]
        resp_lex = spec.lexicons[resp_cat]
        resp_variant = (family_i + kw_i + post_variant) % len(family.responses)
        resp_kw = resp_lex[(kw_i + post_variant) % len(resp_lex)]
        response = fill_template(family.responses[resp_variant], resp_kw)

        records.append({
            "post": " ".join(post),
            "response": " ".join(response),
            "post_labels": [post_cat, "Other"],
            "response_labels": [resp_cat, "Other"],
        })
    return records


def parse_synthetic_spec(text: str) -> SyntheticSpec:
    """Parse the flat key-value synthetic spec format.

    Recognized keys: pairs, seed, templates (a TEMPLATE_SETS name),
    map.<Category>, lexicon.<Category> (space-separated keywords).
    Unspecified fields keep their defaults.
    """
    spec = SyntheticSpec()
    spec.mapping = dict(DEFAULT_MAPPING)
    spec.lexicons = dict(DEFAULT_LEXICONS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key, values = parts[0], parts[1:]
        if not values:
            raise ValueError(f"synthetic spec line {lineno}: key {key!r} has no value")
        if key == "pairs":
            spec.pairs = int(values[0])
        elif key == "seed":
            spec.seed = int(values[0])
        elif key == "templates":
            if values[0] not in TEMPLATE_SETS:
                raise ValueError(
                    f"synthetic spec line {lineno}: unknown template set {values[0]!r}, "
                    f"expected one of {sorted(TEMPLATE_SETS)}")
            spec.families = TEMPLATE_SETS[values[0]]
        elif key.startswith("map."):
            src = check_emotion(key[len("map."):], f"line {lineno}")
            spec.mapping[src] = check_emotion(values[0], f"line {lineno}")
        elif key.startswith("lexicon."):
            cat = check_emotion(key[len("lexicon."):], f"line {lineno}")
            spec.lexicons[cat] = tuple(values)
        else:
            raise ValueError(f"synthetic spec line {lineno}: unknown key {key!r}")
    spec.validate()
    return spec


def load_synthetic_spec(path) -> SyntheticSpec:
    return parse_synthetic_spec(Path(path).read_text(encoding="utf-8"))


def synthetic_spec_text(spec: SyntheticSpec) -> str:
    """Serialize a spec in the format parse_synthetic_spec reads.

    Template families are referenced by TEMPLATE_SETS name, so only specs
    built from a named set can be echoed.
    """
    template_name = None
    for name, families in TEMPLATE_SETS.items():
        if spec.families == families:
            template_name = name
            break
    if template_name is None:
        raise ValueError("synthetic spec: template families are not a named set, cannot serialize")
    lines = [f"pairs {spec.pairs}", f"seed {spec.seed}", f"templates {template_name}"]
    lines += [f"map.{cat} {spec.mapping[cat]}" for cat in EMOTIONS]
    lines += [f"lexicon.{cat} " + " ".join(spec.lexicons[cat]) for cat in EMOTIONS]
    return "\n".join(lines) + "\n"


# --- emotion interaction patterns ----------------------------------------------


def eip_matrix(pairs) -> np.ndarray:
    """Count primary post emotion (rows) against primary response emotion (columns)."""
    matrix = np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=np.int64)
    for pair in pairs:
        matrix[EMOTION_INDEX[pair.post_labels[0]], EMOTION_INDEX[pair.response_labels[0]]] += 1
    return matrix


def eip_csv(matrix: np.ndarray) -> str:
    if matrix.shape != (len(EMOTIONS), len(EMOTIONS)):
        raise ValueError(f"eip_csv expects a 6x6 matrix, got shape {matrix.shape}")
    lines = ["," + ",".join(EMOTIONS)]
    for i, name in enumerate(EMOTIONS):
        lines.append(name + "," + ",".join(str(int(v)) for v in matrix[i]))
    return "\n".join(lines) + "\n"
