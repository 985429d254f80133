"""Template-generated dialogues whose response slots are filled from synonym clusters.

Each subject is tied to one filler word, so the filler at the response slot is predictable from
the context, while the other members of the filler's cluster are interchangeable substitutes.
"""

import random
from typing import Sequence

import numpy as np

from .corpus import Conversation
from .embeddings import EmbeddingMatrix, Vocabulary
from .errors import ConfigError
from .smoothing import SynonymLexicon


DEFAULT_CLUSTERS = (
    ("good", "great", "awesome"),
    ("bad", "awful", "terrible"),
    ("happy", "glad", "cheerful"),
    ("big", "huge", "large"),
    ("small", "tiny", "little"),
    ("fast", "quick", "rapid"),
    ("slow", "sluggish", "leisurely"),
    ("funny", "hilarious", "amusing"),
    ("boring", "dull", "tedious"),
    ("pretty", "beautiful", "lovely"),
    ("ugly", "hideous", "unsightly"),
    ("smart", "clever", "brilliant"),
    ("strange", "weird", "odd"),
    ("calm", "peaceful", "quiet"),
    ("noisy", "loud", "rowdy"),
)

SUBJECTS = (
    "movie", "food", "weather", "game", "book", "song", "trip", "party", "class", "show",
    "concert", "dinner", "hotel", "beach", "museum", "lecture", "meeting", "market", "garden",
    "house", "car", "city", "park", "team", "coffee", "cake", "dog", "cat", "room", "office",
    "film", "album", "festival", "wedding", "picnic", "lunch", "breakfast", "restaurant",
    "bakery", "library", "school", "exam", "homework", "project", "interview", "flight", "train",
    "bus", "bike", "boat", "island", "mountain", "lake", "river", "forest", "camp", "hike",
    "race", "match", "season", "holiday", "vacation", "weekend", "birthday", "gift", "dress",
    "shirt", "shoes", "jacket", "hat", "phone", "laptop", "camera", "tablet", "printer", "sofa",
    "bed", "kitchen", "bathroom", "apartment", "neighborhood", "street", "bridge", "tower",
    "castle", "church", "stadium", "theater", "circus", "zoo", "aquarium", "farm", "village",
    "town", "hospital", "doctor", "dentist", "teacher", "coach", "boss", "neighbor", "cousin",
    "uncle", "aunt", "baby", "puppy", "kitten", "horse", "bird", "fish", "pizza", "pasta",
    "soup", "salad", "sandwich", "burger", "steak", "curry", "sushi", "tea", "juice", "wine",
    "cookie", "pie", "bread", "cheese", "chocolate", "opera", "ballet", "podcast", "novel",
    "poem", "painting", "speech", "seminar", "workshop", "conference", "course",
)  # fmt: skip

QUERY_TEMPLATES = (
    "how was the {subject} ?",
    "what did you think of the {subject} ?",
    "tell me about the {subject} .",
)

RESPONSE_TEMPLATES = (
    "the {subject} was {filler} .",
    "it was really {filler} .",
    "i thought it was {filler} .",
)

# Spread of cluster members around their cluster centre, relative to the centre's scale.
CLUSTER_NOISE = 0.3


def parse_cluster_spec(spec: str) -> tuple[tuple[str, ...], ...]:
    """Parse ``good,great,awesome;bad,awful`` into clusters of words."""
    clusters = tuple(
        tuple(word.strip() for word in cluster.split(",") if word.strip())
        for cluster in spec.split(";")
        if cluster.strip()
    )
    if not clusters or any(len(cluster) < 2 for cluster in clusters):
        raise ConfigError(f"Each synonym cluster needs at least 2 words: {spec!r}")
    return clusters


def subject_fillers(
    clusters: Sequence[Sequence[str]], seed: int, subjects: Sequence[str] = SUBJECTS
) -> dict[str, str]:
    """Assign every subject its filler, cycling over all cluster words in seeded order."""
    words = [word for cluster in clusters for word in cluster]
    random.Random(seed).shuffle(words)
    return {subject: words[i % len(words)] for i, subject in enumerate(subjects)}


def synthetic_corpus(
    seed: int,
    n_conversations: int,
    cluster_spec: Sequence[Sequence[str]] = DEFAULT_CLUSTERS,
    subjects: Sequence[str] = SUBJECTS,
) -> tuple[list[Conversation], SynonymLexicon]:
    """Generate two-turn dialogues and the lexicon of the synonym clusters.

    With the default word pools the vocabulary has about 200 words. The output is fully
    determined by the arguments.
    """
    if n_conversations < 1:
        raise ConfigError(f"n_conversations must be at least 1, got {n_conversations}")
    if not cluster_spec or not subjects:
        raise ConfigError("Need at least one synonym cluster and one subject")

    rng = random.Random(seed)
    fillers = subject_fillers(cluster_spec, seed, subjects)

    conversations = []
    for _ in range(n_conversations):
        subject = rng.choice(subjects)
        query = rng.choice(QUERY_TEMPLATES).format(subject=subject)
        response = rng.choice(RESPONSE_TEMPLATES).format(subject=subject, filler=fillers[subject])
        conversations.append(Conversation(turns=(query, response)))

    entries: dict[str, set[str]] = {}
    for cluster in cluster_spec:
        for word in cluster:
            entries.setdefault(word, set()).update(cluster)

    return conversations, SynonymLexicon(entries)


def synthetic_embeddings(
    vocab: Vocabulary, lexicon: SynonymLexicon, dim: int = 64, seed: int = 0
) -> EmbeddingMatrix:
    """Word vectors in which synonyms lie close together and other words point anywhere.

    Words connected through the lexicon share a random cluster centre plus small noise, so their
    cosine similarity is well above 0.5; all other words get independent random vectors.
    """
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((len(vocab), dim))

    assigned: set[str] = set()
    for token in vocab:
        if token in assigned or not lexicon.synonyms(token):
            continue

        component = _connected_synonyms(token, lexicon)
        assigned |= component

        centre = rng.standard_normal(dim)
        for member in sorted(component):
            if member in vocab:
                values[vocab.index(member)] = centre + CLUSTER_NOISE * rng.standard_normal(dim)

    return EmbeddingMatrix(values)


def _connected_synonyms(token: str, lexicon: SynonymLexicon) -> set[str]:
    component = {token}
    pending = [token]
    while pending:
        for synonym in lexicon.synonyms(pending.pop()):
            if synonym not in component:
                component.add(synonym)
                pending.append(synonym)
    return component
