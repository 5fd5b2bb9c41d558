#!/usr/bin/env python3
"""Regenerates the toy dataset, the scripted-backend scenario and the search fixtures.

    python3 fixtures/make_fixtures.py     # from crates/core

Scenario summary (rounds are history positions):

  film-x        planner prefers recalling the director from memory (plan 1);
                cross-agent consistency picks the Wikipedia lookup (plan 2).
                epc-aw answers "Jane Doe" after one round; no-repair keeps
                recalling, never gets verified evidence and answers "John Roe".
  capital       three rounds: a search that returns nothing, then two supported
                rounds; the stop check fires in round 3.
  divergence    five rounds; planner and consistency disagree in rounds 2 and 4.
  eiffel        self-score means favour plan 1, consistency favours plan 2.
  arithmetic    one base_generator round.
"""

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent
AGENTS = ["Planner", "Executor", "Diagnoser"]
BATCH_MARK = "Write three sections"


def rule(text, when=None, repeat=True):
    r = {"text": text, "repeat": repeat}
    if when is not None:
        r["when_contains"] = when
    return r


def entry(role, purpose, responses, round=None, perspective=None):
    e = {"role": role, "purpose": purpose, "responses": responses}
    if perspective is not None:
        e["perspective"] = perspective
    if round is not None:
        e["round"] = round
    return e


def plans(*blocks):
    return "\n\n".join(f"GOAL: {g}\nTOOL: {t}\nARGS: {a}" for g, t, a in blocks)


def score_lines(scores):
    return "\n".join(f"Plan {k}: {s:g}" for k, s in enumerate(scores, 1))


def evaluations(matrix, round=None):
    """matrix[i][j]: scores evaluator i gives (or predicts) for target j."""
    out = []
    for i, ev in enumerate(AGENTS):
        peers = [j for j in range(3) if j != i]
        batch = "\n".join(
            f"[{AGENTS[j]}]\n{score_lines(matrix[i][j])}" for j in [i] + peers
        )
        for j, tg in enumerate(AGENTS):
            responses = [rule(score_lines(matrix[i][j]))]
            if i == j:
                responses.insert(0, rule(batch, when=BATCH_MARK))
            out.append(entry(ev, "Evaluation", responses, round=round, perspective=[ev, tg]))
    return out


def uniform(k=9, score=4):
    return [[[score] * k for _ in range(3)] for _ in range(3)]


def arguments(*pairs):
    """(action sketch, tool input) pairs, matched on the sketch line of the prompt."""
    return entry(
        "Executor",
        "ToolArgumentation",
        [rule(inp, when=f"Action sketch: {sketch}\n") for sketch, inp in pairs],
    )


def diagnosis(supported, fallback):
    """supported: (outcome condition, rationale, evidence); fallback: Unsupported rationale."""
    responses = [rule(f"SUPPORTED: {why}\nEVIDENCE: {ev}", when=needle) for needle, why, ev in supported]
    responses.append(rule(f"UNSUPPORTED: {fallback}"))
    return responses


def hit(url, title, snippet):
    return {"url": url, "title": title, "snippet": snippet}


SEARCH = {
    "version": 1,
    "google": {
        "largest city of France": [hit("https://example.org/france-cities", "Cities of France",
                                       "Paris is the largest city of France.")],
        "capital of France": [
            hit("https://huggingface.co/datasets/toy-qa", "toy-qa dataset", "Who is the capital... answers leaked"),
            hit("https://example.org/france", "France", "Paris is the capital of France."),
        ],
        "Louvre location": [hit("https://example.org/louvre", "Louvre", "The Louvre is a museum in Paris.")],
        "Seine river length": [hit("https://example.org/seine", "Seine", "The Seine is 777 km long.")],
        "river through Paris": [hit("https://example.org/paris-river", "Paris river",
                                    "The river through Paris is the Seine.")],
        "Eiffel Tower opening year": [hit("https://example.org/eiffel", "Eiffel Tower",
                                          "The Eiffel Tower opened in 1889.")],
    },
    "wikipedia": {
        "Film X": [hit("https://en.wikipedia.org/wiki/Film_X", "Film X",
                       "Film X is a 1999 drama film directed by Jane Doe.")],
        "France": [hit("https://en.wikipedia.org/wiki/France", "France",
                       "France is a country in Western Europe.")],
        "Paris": [hit("https://en.wikipedia.org/wiki/Paris", "Paris",
                      "Paris is the capital of France. The Seine flows through Paris.")],
        "Seine": [hit("https://en.wikipedia.org/wiki/Seine", "Seine",
                      "The Seine flows into the English Channel at Le Havre.")],
        "Eiffel Tower": [hit("https://en.wikipedia.org/wiki/Eiffel_Tower", "Eiffel Tower",
                             "The Eiffel Tower opened in 1889.")],
    },
    "pages": {},
}


def found(engine, query):
    """Diagnosis condition matching the current outcome only (history renders outcomes differently)."""
    h = SEARCH[engine][query][-1]
    return f"Outcome:\n1. {h['title']} ({h['url']})"


def generated(text):
    return f"Outcome:\n{text}"


# Planner is confident in plan 1 and assumes everyone agrees; the executor and
# diagnoser rate plan 2 higher. C_IPS = [-0.3730, 0.0890]: plan 2 selected.
MISCALIBRATED = [
    [[5, 3], [5, 3], [5, 3]],
    [[5, 3], [2, 4], [2, 4]],
    [[5, 3], [2, 4], [2, 4]],
]

# Every agent rates plan 1 higher but expects its peers to rate plan 2 lower
# still, so plan 2 is the more consistent choice. Means [5, 3]; C_IPS = [0, 0.405].
SPLIT = [
    [[5, 3], [5, 2], [5, 2]],
    [[5, 2], [5, 3], [5, 2]],
    [[5, 2], [5, 2], [5, 3]],
]

FEEDBACK = "## Diagnostic feedback"


def film_x():
    recall = ("recall the director of Film X", "base_generator", "who directed Film X")
    lookup = ("look up Film X on Wikipedia", "wikipedia_search", "Film X")
    return [
        entry("Planner", "CandidateGeneration", [
            rule(plans(lookup, recall), when=FEEDBACK),
            rule(plans(recall, lookup)),
        ]),
        *evaluations(MISCALIBRATED),
        arguments(("who directed Film X", "Film X was directed by John Roe."), ("Film X", "Film X")),
        entry("Diagnoser", "Diagnosis", diagnosis(
            [(found("wikipedia", "Film X"), "the Wikipedia entry names the director",
              "Film X (1999) was directed by Jane Doe.")],
            "the director was recalled without any verifiable source",
        )),
        entry("Diagnoser", "StopCheck", [rule("SUFFICIENT", when="Jane Doe"), rule("INSUFFICIENT")]),
        entry("Planner", "AnswerGeneration", [rule("Jane Doe", when="Jane Doe"), rule("John Roe")]),
        entry("Diagnoser", "RollbackTarget", [rule("ROUND: 0")]),
    ]


def capital():
    history = ("find when Paris became the French capital", "google_search", "history of the capital of France")
    largest = ("find the largest city of France", "google_search", "largest city of France")
    capital_q = ("find the capital of France", "google_search", "capital of France")
    wiki = ("look up France on Wikipedia", "wikipedia_search", "France")
    rounds = [(history, wiki), (largest, wiki), (capital_q, wiki)]
    return [
        *[
            entry("Planner", "CandidateGeneration", [rule(plans(capital_q, wiki), when=FEEDBACK), rule(plans(*b))], round=i)
            for i, b in enumerate(rounds, 1)
        ],
        arguments(*[(b[2], b[2]) for b in (history, largest, capital_q, wiki)]),
        entry("Diagnoser", "Diagnosis", diagnosis(
            [
                (found("google", "largest city of France"), "the result names the largest city",
                 "Paris is the largest city of France."),
                (found("google", "capital of France"), "the result states the capital",
                 "Paris is the capital of France."),
            ],
            "the search returned no results",
        )),
        entry("Diagnoser", "StopCheck", [rule("SUFFICIENT", when="Paris is the capital"), rule("INSUFFICIENT")]),
        entry("Planner", "AnswerGeneration", [rule("Paris", when="Paris is the capital"), rule("unknown")]),
        entry("Diagnoser", "RollbackTarget", [rule("ROUND: 0")]),
    ]


def divergence():
    r = {
        1: (("locate the Louvre", "google_search", "Louvre location"),
            ("look up the Louvre on Wikipedia", "wikipedia_search", "Louvre")),
        2: (("read a river guide for the city", "web_search", "https://rivers.example/paris"),
            ("look up Paris on Wikipedia", "wikipedia_search", "Paris")),
        3: (("find the length of the Seine", "google_search", "Seine river length"),
            ("look up the Seine on Wikipedia", "wikipedia_search", "Seine")),
        4: (("recall where the Seine ends", "base_generator", "where does the Seine end"),
            ("look up the Seine on Wikipedia", "wikipedia_search", "Seine")),
        5: (("confirm the river through Paris", "google_search", "river through Paris"),
            ("look up the Seine on Wikipedia", "wikipedia_search", "Seine")),
    }
    entries = []
    for rnd, blocks in r.items():
        entries.append(entry("Planner", "CandidateGeneration", [rule(plans(*blocks))], round=rnd))
    for rnd in (2, 4):
        entries.extend(evaluations(MISCALIBRATED, round=rnd))
    sketches = {b[2] for blocks in r.values() for b in blocks}
    pairs = [(s, "The Seine ends somewhere in the north." if s.startswith("where") else s) for s in sorted(sketches)]
    entries += [
        arguments(*pairs),
        entry("Diagnoser", "Diagnosis", diagnosis(
            [
                (found("google", "Louvre location"), "the result locates the museum", "The Louvre is in Paris."),
                (found("wikipedia", "Paris"), "the article names the river", "The Seine flows through Paris."),
                (found("google", "Seine river length"), "the result gives the length", "The Seine is 777 km long."),
                (found("wikipedia", "Seine"), "the article describes the mouth",
                 "The Seine flows into the English Channel at Le Havre."),
                (found("google", "river through Paris"), "the result confirms the river",
                 "The river through Paris is the Seine."),
            ],
            "the outcome does not contain verifiable evidence for the goal",
        )),
        entry("Diagnoser", "StopCheck", [rule("SUFFICIENT")], round=5),
        entry("Diagnoser", "StopCheck", [rule("INSUFFICIENT")]),
        entry("Planner", "AnswerGeneration", [rule("Seine", when="The Seine flows through Paris"), rule("unknown")]),
        entry("Diagnoser", "RollbackTarget", [rule("ROUND: 1")]),
    ]
    return entries


def eiffel():
    search = ("find the opening year of the Eiffel Tower", "google_search", "Eiffel Tower opening year")
    wiki = ("look up the Eiffel Tower on Wikipedia", "wikipedia_search", "Eiffel Tower")
    return [
        entry("Planner", "CandidateGeneration", [rule(plans(search, wiki))]),
        *evaluations(SPLIT),
        arguments(*[(b[2], b[2]) for b in (search, wiki)]),
        entry("Diagnoser", "Diagnosis", diagnosis(
            [
                (found("google", "Eiffel Tower opening year"), "the result gives the opening year",
                 "The Eiffel Tower opened in 1889."),
                (found("wikipedia", "Eiffel Tower"), "the article gives the opening year",
                 "The Eiffel Tower opened in 1889."),
            ],
            "no opening year found",
        )),
        entry("Diagnoser", "StopCheck", [rule("SUFFICIENT", when="1889"), rule("INSUFFICIENT")]),
        entry("Planner", "AnswerGeneration", [rule("1889", when="1889"), rule("unknown")]),
        entry("Diagnoser", "RollbackTarget", [rule("ROUND: 0")]),
    ]


def arithmetic():
    compute = ("compute 17 times 23", "base_generator", "17 multiplied by 23")
    code = ("compute 17 times 23 in Python", "python_coder", "print(17 * 23)")
    return [
        entry("Planner", "CandidateGeneration", [rule(plans(compute, code))]),
        arguments(("17 multiplied by 23", "17 multiplied by 23 is 391."), ("print(17 * 23)", "print(17 * 23)")),
        entry("Diagnoser", "Diagnosis", diagnosis(
            [(generated("17 multiplied by 23 is 391."), "the product is stated and checks out",
              "17 multiplied by 23 is 391.")],
            "no product was computed",
        )),
        entry("Diagnoser", "StopCheck", [rule("SUFFICIENT", when="391"), rule("INSUFFICIENT")]),
        entry("Planner", "AnswerGeneration", [rule("391", when="391"), rule("unknown")]),
        entry("Diagnoser", "RollbackTarget", [rule("ROUND: 0")]),
    ]


SHARED = [
    *evaluations(uniform()),
    entry("Diagnoser", "ConstraintInduction", [rule(
        "Before relying on a tool, check that it can return verifiable evidence for the goal; "
        "prefer sources whose content can be confirmed over recall or unverified pages."
    )]),
    entry("Executor", "Summarization", [rule("The pages contain no information relevant to the query.")]),
]

TASKS = [
    ("film-x", "Who directed the 1999 film Film X?", "Jane Doe", film_x),
    ("capital", "What is the capital of France?", "Paris", capital),
    ("divergence", "Which river flows through the city where the Louvre is located?", "Seine", divergence),
    ("eiffel", "In which year did the Eiffel Tower open?", "1889", eiffel),
    ("arithmetic", "What is 17 multiplied by 23?", "391", arithmetic),
]


def main():
    with open(HERE / "toy.jsonl", "w") as f:
        for tid, q, a, _ in TASKS:
            f.write(json.dumps({"id": tid, "question": q, "answer": a, "dataset": "toy"}) + "\n")
    script = {"version": 1, "shared": SHARED, "tasks": {tid: build() for tid, _, _, build in TASKS}}
    (HERE / "toy_script.json").write_text(json.dumps(script, indent=1) + "\n")
    (HERE / "search.json").write_text(json.dumps(SEARCH, indent=1) + "\n")


if __name__ == "__main__":
    main()
