#!/usr/bin/env python3
"""Regenerates the bundled fixtures. Output is deterministic."""

import json
import random
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent
DIM = 32

TOY = {
    "mug": (
        "i love this mug . it keeps my coffee hot all morning .",
        "i hate this mug . the handle cracked after one week .",
    ),
    "lamp": (
        "great lamp , warm light and easy to set up .",
        "awful lamp , the bulb flickers and the switch broke .",
    ),
    "backpack": (
        "love the backpack ! plenty of pockets and very comfortable .",
        "hate the backpack ! the zipper failed on day two .",
    ),
    "kettle": (
        "excellent kettle . boils fast and looks great .",
        "terrible kettle . it smells like plastic every time .",
    ),
    "headphones": (
        "perfect headphones , clear sound and i love the fit .",
        "bad headphones , tinny sound and i hate the fit .",
    ),
}

POSITIVE = ["love", "great", "excellent", "perfect", "good", "comfortable", "easy", "clear", "warm", "happy"]
NEGATIVE = ["hate", "awful", "terrible", "bad", "broke", "cracked", "failed", "tinny", "flickers", "poor"]


def write_features(path, dim, table):
    with open(path, "wb") as f:
        f.write(b"IMGF")
        f.write(struct.pack("<II", len(table), dim))
        for pid, vec in table:
            raw = pid.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack(f"<{dim}f", *vec))


def features(rng, ids, dim):
    return [(pid, [round(rng.uniform(0.0, 1.0), 4) for _ in range(dim)]) for pid in ids]


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def main():
    rng = random.Random(20240501)
    ids = list(TOY)
    write_features(HERE / "toy_features.bin", DIM, features(rng, ids, DIM))
    rows = []
    for pid, (pos, neg) in TOY.items():
        rows.append({"product_id": pid, "rating": 5, "review": pos})
        rows.append({"product_id": pid, "rating": 1, "review": neg})
    write_jsonl(HERE / "toy_reviews.jsonl", rows)

    (HERE / "pos.txt").write_text("\n".join(POSITIVE) + "\n")
    (HERE / "neg.txt").write_text("\n".join(NEGATIVE) + "\n")

    # one kept, one overlong, one without a feature vector
    write_jsonl(
        HERE / "filter_reviews.jsonl",
        [
            {"product_id": "mug", "rating": 4, "review": "solid mug ."},
            {"product_id": "lamp", "rating": 2, "review": " ".join(["dim"] * 101)},
            {"product_id": "toaster", "rating": 3, "review": "never arrived ."},
        ],
    )

    write_jsonl(
        HERE / "boundary_reviews.jsonl",
        [
            {"product_id": "mug", "rating": 5, "review": " ".join(["good"] * 100)},
            {"product_id": "lamp", "rating": 1, "review": " ".join(["bad"] * 101)},
        ],
    )

    write_jsonl(
        HERE / "bad_rating_reviews.jsonl",
        [
            {"product_id": "mug", "rating": 5, "review": "fine ."},
            {"product_id": "lamp", "rating": 7, "review": "too bright ."},
        ],
    )

    write_features(HERE / "wrong_dim_features.bin", 16, features(rng, ids, 16))


if __name__ == "__main__":
    main()
