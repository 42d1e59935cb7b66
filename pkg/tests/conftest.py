import pytest

from ragsearch.environment import CorpusDoc, QAItem, make_environment
from ragsearch.gateway import mock_gateway
from ragsearch.space import Dimension, SearchSpace

FACTS = [
    ("q1", "Which river carries the most water on Earth?",
     "The Amazon river carries the most water on Earth."),
    ("q2", "In which year was the chemistry prize awarded to Curie?",
     "Curie received the chemistry prize in 1911."),
    ("q3", "How tall is the summit of Everest?",
     "The summit of Everest is 8849 metres tall."),
    ("q4", "Which dynasty rebuilt the Great Wall?",
     "The Ming dynasty rebuilt the Great Wall."),
    ("q5", "Who invented movable type printing in Europe?",
     "Gutenberg invented movable type printing in Europe."),
]
FILLER = [
    "Rain fell steadily over the valley during the night.",
    "Markets opened late because of the holiday.",
    "A small cat slept beside the warm stove.",
]


def build_five_item_env():
    """Each reference sentence appears verbatim in one document, padded with unrelated sentences."""
    corpus, qa = [], []
    for i, (qid, question, answer) in enumerate(FACTS):
        text = " ".join([FILLER[i % 3], answer, FILLER[(i + 1) % 3]])
        corpus.append(CorpusDoc(f"d{i + 1}", text))
        qa.append(QAItem(qid, question, (answer,)))
    return make_environment("five", qa, corpus)


@pytest.fixture
def five_env():
    return build_five_item_env()


@pytest.fixture
def gateway():
    return mock_gateway()


def tiny_space(sizes=(3, 4, 2)):
    return SearchSpace([Dimension(f"d{i}", "retriever", tuple(f"v{j}" for j in range(n)))
                        for i, n in enumerate(sizes)])
