#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under tests/fixtures.

    python3 tools/make_fixtures.py [--seed N] [--out DIR]

Output is a pure function of the seed.
"""
import argparse
import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

VERY_POS = ["great", "excellent", "amazing", "wonderful", "love", "brilliant", "fantastic", "awesome",
            "perfect", "superb", "very good", "well done", "absolutely brilliant", "best wishes"]
POS = ["nice", "fine", "decent", "useful", "fair", "interesting", "helpful", "calm", "thanks", "pleasant",
       "not bad", "fairly good", "might help"]
NEG = ["poor", "sad", "wrong", "boring", "weak", "annoying", "unfair", "confusing", "messy", "tired",
       "worried", "disappointing", "not good", "could be better", "too slow"]
VERY_NEG = ["terrible", "awful", "horrible", "disgusting", "hate", "stupid", "idiot", "pathetic",
            "shameful", "disgrace", "liar", "evil", "worst", "total disgrace", "makes me sick", "shut up"]
FILLER = ["the", "news", "today", "president", "people", "report", "city", "government", "story", "this",
          "that", "they", "said", "about", "week", "vote", "policy", "school", "police", "market",
          "football", "weather", "article", "video", "reading", "again", "minister", "council", "after",
          "before", "from", "with", "town", "team", "match", "price", "train", "road", "election", "budget"]
POS_EMOJI = ["\U0001F600", "\U0001F60D", "\U0001F44D", "\U0001F389", "❤"]
NEG_EMOJI = ["\U0001F621", "\U0001F620", "\U0001F44E", "\U0001F92C", "\U0001F62D"]
PHRASES = {0: VERY_NEG, 1: NEG, 2: [], 3: POS, 4: VERY_POS}

START = datetime(2021, 3, 1, tzinfo=timezone.utc)


def iso(t):
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def comment_text(rng, target, long=False):
    words = [rng.choice(FILLER) for _ in range(rng.randint(3, 8))]
    phrases = PHRASES[target]
    for _ in range(rng.randint(1, 2) if phrases else 0):
        words.insert(rng.randint(0, len(words)), rng.choice(phrases))
    if long:
        words += [rng.choice(FILLER) for _ in range(rng.randint(28, 40))]
        if phrases:
            words.append(rng.choice(phrases))
    text = " ".join(words)
    if target == 0 and rng.random() < 0.4:
        text += " " + rng.choice(NEG_EMOJI)
    if target == 4 and rng.random() < 0.4:
        text += " " + rng.choice(POS_EMOJI)
    if target in (0, 4) and rng.random() < 0.3:
        text += "!"
    if rng.random() < 0.15:
        text = "@" + rng.choice(["alex", "sam", "newsdesk"]) + " " + text
    if rng.random() < 0.1:
        text += " https://example.org/" + str(rng.randint(100, 999))
    if rng.random() < 0.1:
        text += " #" + rng.choice(FILLER)
    return text


def synthetic_corpus(rng, n=500):
    pages = ["page_a", "page_b"]
    posts = []
    for i in range(40):
        posts.append({"post_id": f"p{i:03d}", "page": pages[i % 2],
                      "t0": START + timedelta(hours=rng.randint(0, 27 * 24))})
    lines = []
    for i in range(n):
        post = rng.choice(posts)
        t = post["t0"] + timedelta(minutes=rng.randint(0, 48 * 60))
        rec = {"post_id": post["post_id"], "comment_id": f"c{i:04d}", "created_time": iso(t),
               "page": post["page"]}
        if i % 97 == 13:
            rec["message"] = "https://example.org/only-a-link"
        else:
            rec["message"] = comment_text(rng, rng.randint(0, 4), long=(i % 41 == 7))
        lines.append(json.dumps(rec, ensure_ascii=False))
    lines.insert(100, '{"post_id": "p001", "comment_id": "broken"')
    lines.insert(300, "not json at all")
    return lines


def labeled_record(post_id, cid, t, label):
    word = {0: "awful", 1: "poor", 2: "news", 3: "nice", 4: "great"}[label]
    score = {0: -0.8, 1: -0.3, 2: 0.0, 3: 0.35, 4: 0.75}[label]
    return {"post_id": post_id, "comment_id": cid, "created_time": iso(t), "tokens": [word],
            "emojis": [], "caps_flags": [False], "exclaim_flags": [False], "original_text": word,
            "score": score, "label": label}


def planted_flaming(rng, n_posts=200, planted=(37, 101, 163)):
    out = []
    for p in range(n_posts):
        pid = f"post{p:03d}"
        t0 = START + timedelta(hours=rng.randint(0, 29 * 24))
        if p in planted:
            vn = rng.randint(60, 80)
            others = rng.randint(40, 80)
            times = [t0 + timedelta(minutes=rng.randint(0, 150)) for _ in range(vn)]
        else:
            vn = rng.randint(0, 3)
            others = rng.randint(10, 30)
            times = [t0 + timedelta(minutes=rng.randint(0, 24 * 60)) for _ in range(vn)]
        labels = [0] * vn + [rng.randint(1, 4) for _ in range(others)]
        times += [t0 + timedelta(minutes=rng.randint(0, 24 * 60)) for _ in range(others)]
        for k, (lab, t) in enumerate(zip(labels, times)):
            out.append((t, labeled_record(pid, f"{pid}_c{k:03d}", t, lab)))
    out.sort(key=lambda x: (x[0], x[1]["comment_id"]))
    return [json.dumps(r) for _, r in out], [f"post{p:03d}" for p in planted]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20210301)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    (out / "synthetic_comments.jsonl").write_text("\n".join(synthetic_corpus(rng)) + "\n", encoding="utf-8")
    lines, planted = planted_flaming(rng)
    (out / "planted_flaming.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "planted_posts.json").write_text(json.dumps(planted) + "\n")

    matrices = {
        "lexicon_table_matrix.json": [[128, 19, 35], [57, 83, 37], [37, 12, 90]],
        "baseline_table_matrix.json": [[24, 12, 156], [0, 15, 162], [1, 1, 137]],
    }
    for name, rows in matrices.items():
        doc = {"classes": ["Pos", "Neg", "Neu"], "matrix": rows}
        (out / name).write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
