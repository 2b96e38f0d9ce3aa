"""Writes kb_dump.jsonl and audits it line by line into kb_dump.manifest.json.

The audit reimplements the ingest rules independently: a line is malformed if
it is not a JSON object with a non-blank string `word`, a string `pos` and a
list `senses` whose relation values are lists of strings. Senses dedupe by
(word, pos, gloss) after trimming, triples by (sense, predicate, object).
"""
import json
import random

REL = {"forms": "form", "synonyms": "synonym", "hyponyms": "hyponym", "instances": "instance"}
rng = random.Random(11)
words = ["dingbat", "race traitor", "fool", "bigot", "run", "pastry", "cake", "crank",
         "oaf", "snob", "heathen", "zealot", "lout", "boor", "dolt", "twit", "prig"]
objs = ["idiot", "nitwit", "simpleton", "dunce", "ninny", "half-wit", "bun", "tart",
        "scone", "loaf", "croissant", "runs", "running", "ran", "dingbats", "fools"]

good = []
for i in range(43):
    w = words[i % len(words)]
    senses = []
    for j in range(rng.randint(1, 3)):
        rels = {}
        for key in rng.sample(sorted(REL) + ["antonyms", "derived"], rng.randint(1, 3)):
            rels[key] = rng.sample(objs, rng.randint(1, 3))
        if rng.random() < 0.15:
            rels.setdefault("synonyms", []).append("   ")
        senses.append({"gloss": f"gloss {i % 29} variant {j}", "relations": rels})
    good.append(json.dumps({"word": w, "pos": rng.choice(["noun", "verb"]), "senses": senses}))

good[42] = good[3]  # exact repeat: every triple is a duplicate

bad = [
    '{"word": "broken", "pos": "noun", "senses": [',
    'not json at all',
    '{"word": "", "pos": "noun", "senses": []}',
    '{"word": "nopos", "senses": []}',
    '{"word": "x", "pos": "noun", "senses": [{"gloss": "g", "relations": {"synonyms": "fool"}}]}',
    '{"word": "x", "pos": "noun", "senses": [{"gloss": "g", "relations": {"synonyms": [3]}}]}',
    '[1, 2, 3]',
]
lines = good[:]
for k, b in enumerate(bad):
    lines.insert(5 + 6 * k, b)
with open("kb_dump.jsonl", "w") as f:
    f.write("\n".join(lines) + "\n")


def audit(line):
    try:
        rec = json.loads(line)
    except ValueError:
        return None
    if not isinstance(rec, dict):
        return None
    w, pos, ss = rec.get("word"), rec.get("pos"), rec.get("senses")
    if not isinstance(w, str) or not w.strip() or not isinstance(pos, str) or not isinstance(ss, list):
        return None
    out = []
    for s in ss:
        gloss = s.get("gloss", "")
        rels = s.get("relations", {})
        parsed = []
        for key, val in rels.items():
            if key not in REL:
                parsed.append(("unsupported", None))
                continue
            if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
                return None
            parsed.extend((REL[key], v.strip()) for v in val)
        out.append(((w.strip(), pos.strip(), gloss.strip()), parsed))
    return out


senses, triples = set(), set()
m = {"records_parsed": 0, "records_skipped": 0, "skipped_lines": [], "unsupported_relations": 0,
     "duplicate_triples": 0, "empty_objects": 0}
for n, line in enumerate(lines, 1):
    rec = audit(line)
    if rec is None:
        m["records_skipped"] += 1
        m["skipped_lines"].append(n)
        continue
    m["records_parsed"] += 1
    for key, parsed in rec:
        senses.add(key)
        for pred, obj in parsed:
            if pred == "unsupported":
                m["unsupported_relations"] += 1
            elif not obj:
                m["empty_objects"] += 1
            elif (key, pred, obj) in triples:
                m["duplicate_triples"] += 1
            else:
                triples.add((key, pred, obj))
m["senses"] = len(senses)
m["triples"] = len(triples)
by = {}
for _, pred, _ in triples:
    by[pred] = by.get(pred, 0) + 1
m["triples_by_predicate"] = dict(sorted(by.items()))
with open("kb_dump.manifest.json", "w") as f:
    json.dump(m, f, indent=2)
    f.write("\n")
