#!/usr/bin/env python3
"""Writes the synthetic training fixture (release layout: text + triple_list).

Sentences come from a handful of templates over small entity pools. Some
templates produce several relations between one entity pair (EPO) and some
share a single entity between triples (SEO).

    python3 tools/make_fixture.py tests/data/fixture.json
"""

import json
import random
import sys

PEOPLE = [
    "Anna Berg", "Tomas", "Lena Vogt", "Marco Rossi", "Ines", "Paul Okafor", "Yuki Sato",
    "Omar Haddad", "Clara", "Ravi Menon", "Sofia Lind", "Jonas", "Mei Chen", "Pedro Alves",
    "Hanna Kova", "Luis", "Nora Quist", "Ivan Petrov",
]
CITIES = ["Berlin", "Porto", "New Haven", "Kyoto", "Lagos", "Oslo", "San Remo", "Tartu", "Quito", "Lyon"]
COUNTRIES = ["Germany", "Portugal", "Japan", "Nigeria", "Norway", "Estonia", "Ecuador", "France"]
ORGS = ["Acme Corp", "Globex", "Initech", "Blue Harbor Labs", "Vantor", "Helix Group", "Nordwind", "Orbis"]

RELATIONS = ["born_in", "lives_in", "works_for", "capital_of", "located_in", "founded_by"]


def templates(rng):
    p, q = rng.sample(PEOPLE, 2)
    c, d = rng.sample(CITIES, 2)
    k = rng.choice(COUNTRIES)
    o = rng.choice(ORGS)
    return [
        # normal
        (f"{p} was born in {c} .", [(p, "born_in", c)]),
        (f"{p} works for {o} .", [(p, "works_for", o)]),
        (f"{o} has its offices in {c} .", [(o, "located_in", c)]),
        (f"{p} moved to {d} last year .", [(p, "lives_in", d)]),
        # EPO: one pair, two relations
        (f"{p} was born and still lives in {c} .", [(p, "born_in", c), (p, "lives_in", c)]),
        (f"{c} is the capital of {k} .", [(c, "capital_of", k), (c, "located_in", k)]),
        # SEO: shared subject or object
        (f"{p} , who works for {o} , was born in {c} .", [(p, "works_for", o), (p, "born_in", c)]),
        (f"{o} was founded by {p} in {c} .", [(o, "founded_by", p), (o, "located_in", c)]),
        (f"{p} and {q} were both born in {c} .", [(p, "born_in", c), (q, "born_in", c)]),
        # many triples, EPO and SEO together
        (
            f"{p} , born in {c} , the capital of {k} , founded {o} .",
            [(p, "born_in", c), (c, "capital_of", k), (c, "located_in", k), (o, "founded_by", p),
             (p, "works_for", o)],
        ),
    ]


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/fixture.json"
    rng = random.Random(20211)
    records, seen = [], set()
    while len(records) < 64:
        for text, triples in templates(rng):
            if len(records) == 64:
                break
            if text in seen:
                continue
            seen.add(text)
            records.append({"text": text, "triple_list": [list(t) for t in triples]})
    with open(out, "w", encoding="utf-8") as f:
        f.write("[\n" + ",\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n]\n")
    with open(out.replace(".json", "_relations.json"), "w", encoding="utf-8") as f:
        json.dump(RELATIONS, f)
        f.write("\n")


if __name__ == "__main__":
    main()
