"""Builds the 50-video retrieval corpus and its expected selection.

The expected output is computed here with a straightforward, independent
implementation of the selection rules. Times are multiples of 0.25 s so every
window bound is exact in binary floating point.
"""
import json
import random

THUMB, KEY, MAX_KEYS, WIN, CAP = 0.8, 0.8, 15, 2.0, 300


def video(vid, cls, thumb, keys, duration=60.0):
    return {
        "id": vid,
        "class": cls,
        "thumbnail_score": thumb,
        "keyframes": [{"t": t, "score": s} for t, s in keys],
        "frame_rate": 30.0,
        "duration": duration,
    }


def corpus():
    vids = [
        video("v00", "cat", 0.8, [(10.0, 0.9)]),
        video("v01", "cat", 0.79, [(10.0, 0.9)]),
        video("v02", "cat", 0.81, [(10.0, 0.9)]),
        video("v03", "dog", 0.9, [(10.0, 0.9), (11.0, 0.95)]),
        video("v04", "dog", 0.9, [(10.0, 0.9), (14.0, 0.85)]),
        video("v05", "dog", 0.9, [(0.5, 0.9), (19.5, 0.9)], duration=20.0),
        video("v06", "horse", 0.95, [(4.0 * i + 1.0, 0.81 + 0.009 * i) for i in range(20)], duration=90.0),
        video("v07", "horse", 0.99, [(5.0, 0.8), (9.0, 0.5)]),
        video("v08", "horse", 0.85, [(3.0 + 2.0 * i, 0.9) for i in range(18)], duration=40.0),
        video("v09", "cat", 0.95, []),
    ]
    rng = random.Random(20240517)
    classes = ["cat", "dog", "horse", "bird"]
    for i in range(10, 50):
        dur = rng.choice([15.0, 30.0, 45.0, 60.0, 120.0])
        keys = []
        for _ in range(rng.randint(0, 22)):
            t = rng.randint(0, int(dur * 4)) / 4.0
            s = rng.choice([0.5, 0.7, 0.8, 0.8125, 0.85, 0.875, 0.9, 0.95, 0.99])
            keys.append((t, s))
        thumb = rng.choice([0.6, 0.75, 0.8, 0.8125, 0.85, 0.9, 0.95, 0.9375])
        vids.append(video("v%02d" % i, rng.choice(classes), thumb, keys, dur))
    return vids


def select(vids):
    by_class = {}
    for v in vids:
        if v["thumbnail_score"] > THUMB:
            by_class.setdefault(v["class"], []).append(v)
    out = []
    for cls in sorted(by_class):
        ranked = sorted(by_class[cls], key=lambda v: (-v["thumbnail_score"], v["id"]))
        kept = []
        for v in ranked:
            keys = [k for k in v["keyframes"] if k["score"] > KEY]
            keys.sort(key=lambda k: (-k["score"], k["t"]))
            keys = keys[:MAX_KEYS]
            if not keys:
                continue
            wins = sorted((max(k["t"] - WIN, 0.0), min(k["t"] + WIN, v["duration"])) for k in keys)
            merged = []
            for s, e in wins:
                if merged and s <= merged[-1][1]:
                    merged[-1][1] = max(merged[-1][1], e)
                else:
                    merged.append([s, e])
            kept.append({
                "video_id": v["id"],
                "class": cls,
                "windows": merged,
                "selected_keyframes": len(keys),
            })
        out.extend(kept[:CAP])
    return out


if __name__ == "__main__":
    vids = corpus()
    with open("retrieval_corpus.json", "w") as f:
        json.dump({"videos": vids}, f, indent=1)
    with open("retrieval_expected.json", "w") as f:
        json.dump(select(vids), f, indent=1)
