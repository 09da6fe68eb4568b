import dataclasses

import pytest

from mistakelab.model import MistakeLocation, TaskKind, Trace


def make_trace(
    id="t1",
    task=TaskKind.WORD_SORTING,
    question="Sort the following words alphabetically: List: b a",
    target="a b",
    steps=("Thought 1: Look at the first letters.", "Thought 2: The answer is a b"),
    answer="a b",
    mistake=None,
):
    return Trace(
        id=id,
        task=task,
        question=question,
        target=target,
        steps=tuple(steps),
        answer=answer,
        mistake=mistake,
    )


def word_sorting_trace(id, words, answer, mistake=None):
    """Synthetic 2-step word-sorting trace with a chosen final answer."""
    question = "Sort the following words alphabetically: List: " + " ".join(words)
    target = " ".join(sorted(words))
    return make_trace(
        id=id,
        question=question,
        target=target,
        steps=(
            "Thought 1: I should look at the first letter of each word.",
            f"Thought 2: I have now sorted all the words. The answer is {answer}",
        ),
        answer=answer,
        mistake=mistake,
    )


def with_id(trace, new_id):
    return dataclasses.replace(trace, id=new_id)


@pytest.fixture
def table1_trace():
    """The example word-sorting trace with its gold mistake at step 4."""
    return Trace(
        id="table1",
        task=TaskKind.WORD_SORTING,
        question="Sort the following words alphabetically: List: hypochlorite ponderosa phone credulity",
        target="credulity hypochlorite phone ponderosa",
        steps=(
            'Thought 1: I should start by looking at the first letter of the words in the list. The first letter: "hypochlorite": "h" (8). "ponderosa": "p" (16). "phone": "p" (16). "credulity": "c" (3).',
            'Thought 2: We now have: (3) "credulity" < (8) "hypochlorite" < (16) ["ponderosa" ? "phone"].',
            'Thought 3: Now let\'s sort this subpart ["ponderosa" ? "phone"] by looking at their second letters. The second letter: "ponderosa": "o" (15). "phone": "h" (8).',
            'Thought 4: We now have: (8) "phone" < (15) "ponderosa" for the subpart. Hence, we have "credulity" < "phone" < "ponderosa".',
            "Thought 5: I have now sorted all the words. The answer is credulity hypochlorite phone ponderosa",
        ),
        answer="credulity hypochlorite phone ponderosa",
        mistake=MistakeLocation.at_step(4),
    )
