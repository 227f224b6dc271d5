"""Hand trace of the OS/PS scores for the 4-API toy catalog.

Written from the scoring definitions only (no shared code with the Rust
implementation). Regenerates expected.json next to this file.
"""
import json
import math
import re
from pathlib import Path

HERE = Path(__file__).parent
APIS = [json.loads(l) for l in (HERE / "catalog.jsonl").read_text().splitlines() if l.strip()]


def tokenize(text):
    out = []
    for word in re.split(r"[^0-9A-Za-z]+", text):
        cur = ""
        for i, c in enumerate(word):
            if i > 0 and c.isupper():
                prev = word[i - 1]
                nxt = word[i + 1] if i + 1 < len(word) else ""
                if prev.islower() or (prev.isupper() and nxt.islower()):
                    out.append(cur)
                    cur = ""
            cur += c.lower()
        if cur:
            out.append(cur)
    return [t for t in out if t]


def field(api, name):
    if name == "name":
        return api["full_name"]
    if name == "param":
        parts = []
        for p in api["params"]:
            d = p.get("description", "")
            parts.append(f"{p['name']}: {d}" if d else p["name"])
        return "; ".join(parts)
    return api.get("description", "")


def cosine(a, b):
    dot = sum(a[k] * b.get(k, 0.0) for k in a)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return min(1.0, max(0.0, dot / (na * nb)))


def tfidf_vectors(name):
    docs = [tokenize(field(a, name)) for a in APIS]
    n = len(docs)
    df = {}
    for d in docs:
        for t in set(d):
            df[t] = df.get(t, 0) + 1
    vecs = []
    for d in docs:
        v = {}
        for t in d:
            v[t] = v.get(t, 0) + 1
        vecs.append({t: c * (math.log(n / (1 + df[t])) + 1) for t, c in v.items()})
    return vecs


def fnv1a(s):
    h = 0xCBF29CE484222325
    for b in s.encode():
        h ^= b
        h = (h * 0x100000001B3) % (1 << 64)
    return h


def embed(text):
    v = {}
    for t in tokenize(text):
        k = fnv1a(t) % 256
        v[k] = v.get(k, 0.0) + 1.0
    return v


FIELDS = ["name", "param", "desc"]
TF = {f: tfidf_vectors(f) for f in FIELDS}
EM = {f: [embed(field(a, f)) for a in APIS] for f in FIELDS}


def both(i, j):
    t = {f: cosine(TF[f][i], TF[f][j]) for f in FIELDS}
    s = {f: cosine(EM[f][i], EM[f][j]) for f in FIELDS}
    return t, s


def all_score(d):
    return max(d["name"] + d["param"], d["desc"] + d["param"]) / 2


rows = []
for i, a in enumerate(APIS):
    for j, b in enumerate(APIS):
        if i == j:
            continue
        t, s = both(i, j)
        for kind, text, sem in (("OS", all_score(t), all_score(s)), ("PS", t["param"], s["param"])):
            for alpha in (0.0, 0.35, 1.0):
                rows.append({
                    "source": a["full_name"], "target": b["full_name"], "kind": kind, "alpha": alpha,
                    "text": text, "sem": sem, "combined": alpha * text + (1 - alpha) * sem,
                })

(HERE / "expected.json").write_text(json.dumps(rows, indent=1) + "\n")
print(len(rows), "rows")
