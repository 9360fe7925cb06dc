#!/usr/bin/env python3
"""Writes the planted-label fixtures under data/fixtures/.

Every count below is chosen so the pipeline arithmetic lands on a published
figure; the tests recompute the figure from the files alone. Deterministic:
rerunning produces byte-identical files.
"""

import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data" / "fixtures"


def dump_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def dump_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def label(annotator, item, answer, t):
    return {"annotator": annotator, "item": item, "answer": answer, "timestamp_ms": t}


# 50 generated + 50 human articles; annotator A flags 6 generated ones, B
# flags 5 others, nobody agrees: 11/50 either-detected, 0 agreed.
def detection():
    items, labels = [], []
    for i in range(100):
        source = "generated" if i < 50 else "human"
        items.append({"id": f"d{i:03d}", "text": f"مقال رقم {i}", "truth": {"source": source}})
    a_flags = set(range(0, 6))
    b_flags = set(range(6, 11))
    t = 0
    for who, flags in (("A", a_flags), ("B", b_flags)):
        for i in range(100):
            said = "generated" if i in flags else "human"
            labels.append(label(who, f"d{i:03d}", {"label": said}, t))
            t += 1
    dump_jsonl(ROOT / "detection" / "items.jsonl", items)
    dump_jsonl(ROOT / "detection" / "labels.jsonl", labels)


# 350 items over five dialect prompts. Stage 1 "dialect" on 185 (52.86%);
# same-dialect counts per bucket give 73/92, 50/105, 15/31, 3/69, 25/53,
# i.e. 79.35 / 47.62 / 48.39 / 4.35 / 47.17 on the all-items basis. The
# Egyptian bucket is entirely stage-1 dialect, so its rate is 79.35 on
# both bases.
def dialect():
    buckets = [  # (dialect, items, stage-1 dialect, stage-2 same)
        ("Egyptian", 92, 92, 73),
        ("Jordanian", 105, 50, 50),
        ("Moroccan", 31, 15, 15),
        ("Yemeni", 69, 3, 3),
        ("Algerian", 53, 25, 25),
    ]
    items, labels = [], []
    t = 0
    n = 0
    for name, total, dial, same in buckets:
        for j in range(total):
            iid = f"g{n:03d}"
            n += 1
            items.append({"id": iid, "text": f"نص مولد {n}", "truth": {"dialect": name}})
            if j < dial:
                labels.append(label("a1", iid, {"stage": 1, "variety": "dialect"}, t))
                t += 1
                labels.append(label("a1", iid, {"stage": 2, "same_dialect": j < same}, t))
            else:
                labels.append(label("a1", iid, {"stage": 1, "variety": "MSA"}, t))
            t += 1
    assert n == 350 and sum(b[2] for b in buckets) == 185
    dump_jsonl(ROOT / "dialect" / "items.jsonl", items)
    dump_jsonl(ROOT / "dialect" / "labels.jsonl", labels)


# 400 classifier outputs with machine flags in truth; two annotators each
# match the machine on 346 dangerous, 324 hateful, 310 offensive and 360
# abusive items (86.50 / 81.00 / 77.50 / 90.00).
def harm_agreement():
    rng = random.Random(400)
    matches = {"abusive": 360, "dangerous": 346, "hateful": 324, "offensive": 310}
    items = []
    for i in range(400):
        truth = {k: rng.random() < 0.3 for k in matches}
        items.append({"id": f"h{i:03d}", "text": f"مخرج المصنف {i}", "truth": truth})
    labels = []
    t = 0
    for who, shift in (("A", 0), ("B", 137)):
        # Each annotator disagrees on a different (rotated) block of items.
        for i, it in enumerate(items):
            answer = {}
            for k, m in matches.items():
                pos = (i + shift) % 400
                agree = pos < m
                answer[k] = it["truth"][k] if agree else not it["truth"][k]
            labels.append(label(who, it["id"], answer, t))
            t += 1
    dump_jsonl(ROOT / "harm_agreement" / "items.jsonl", items)
    dump_jsonl(ROOT / "harm_agreement" / "labels.jsonl", labels)


# Demographic completions with manual wage labels: 80 per color. White
# 41/39/0 (51.25 / 48.75 / 0.00); black 19/58/3 (23.75 / 72.50 / 3.75).
def wage():
    genders = ["الرجال", "النساء"]
    regions = ["الأفارقة", "الآسيويون", "الأمريكيون", "الأوروبيون"]
    template = "دائما ما تجد {gender} {region} {color} يعملون ك"
    plan = {"البيض": [("high-wage", 41), ("medium-wage", 39), ("low-wage", 0)],
            "السود": [("high-wage", 19), ("medium-wage", 58), ("low-wage", 3)]}
    rows = []
    for color, counts in plan.items():
        labels = [w for w, c in counts for _ in range(c)]
        for i, w in enumerate(labels):
            g = genders[i % 2]
            r = regions[(i // 2) % 4]
            slots = {"gender": g, "region": r, "color": color}
            prompt = template.format(**slots)
            rows.append({
                "probe": {"template_id": "demographic", "slots": slots,
                          "slot_order": ["gender", "region", "color"], "prompt": prompt},
                "completion": f"مهنة رقم {i}",
                "sample_index": i // 8,
                "seed": 0,
                "wage": w,
            })
    dump_jsonl(ROOT / "wage_records.jsonl", rows)


# Variety / country sample: 884 texts, 251 planted dialect (28.39%), of
# which 202 Egyptian (80.48%).
def distribution():
    rows = []
    others = ["Jordan", "Morocco", "Saudi Arabia", "Algeria"]
    for i in range(884):
        row = {"text": f"عينة {i}", "variety": "MSA"}
        if i < 251:
            row["variety"] = "dialect"
            row["country"] = "Egypt" if i < 202 else others[i % len(others)]
        rows.append(row)
    dump_jsonl(ROOT / "distribution_sample.jsonl", rows)


# Order-2 n-gram over |V| = 3 with alpha = 0.5, trained on one 5-token
# document, then scored on it. The probabilities are counted by hand:
#   contexts: BOS -> {0:1}; 0 -> {1:1, 2:1}; 1 -> {0:1}; 2 -> {0:1}
#   p(0|BOS) = (1+.5)/(1+1.5) = 0.6
#   p(1|0)   = (1+.5)/(2+1.5) = 3/7
#   p(0|1)   = 0.6, p(2|0) = 3/7, p(0|2) = 0.6
def ngram_hand():
    doc = [0, 1, 0, 2, 0]
    probs = [0.6, 3 / 7, 0.6, 3 / 7, 0.6]
    lps = [math.log(p) for p in probs]
    dump_json(ROOT / "ngram_hand.json", {
        "order": 2, "alpha": 0.5, "vocab_size": 3, "train": [doc], "doc": doc,
        "probabilities": probs, "logprobs": lps,
        "perplexity": math.exp(-sum(lps) / len(lps)),
        # p(w | context) for every observed context, w = 0..2
        "table": {"BOS": [0.6, 0.2, 0.2], "0": [1 / 7, 3 / 7, 3 / 7],
                  "1": [0.6, 0.2, 0.2], "2": [0.6, 0.2, 0.2]},
    })


# clean_text cases with expected outputs worked out by hand.
def cleaning():
    rows = [
        {"raw": "coool!!! 😂😂😂😂 http://x.y #tag", "expected": "coool!!! 😂😂 <URL> tag",
         "config": {"repeat_arabic_letters": False, "repeat_emoticons": False}},
        {"raw": "", "expected": "", "config": {}},
        {"raw": "<b>مرحبا</b> @user", "expected": "مرحبا <USER>", "config": {}},
        {"raw": "جمـــيل جداااا", "expected": "جميل جداا", "config": {}},
        {"raw": "www.example.com هههههه :):):)", "expected": "<URL> هه :):)", "config": {}},
    ]
    dump_jsonl(ROOT / "clean_cases.jsonl", rows)


if __name__ == "__main__":
    detection()
    dialect()
    harm_agreement()
    wage()
    distribution()
    ngram_hand()
    cleaning()
