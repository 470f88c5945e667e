#!/usr/bin/env python3
"""Regenerate the bundled fixtures under fixtures/.

    python3 scripts/make_fixtures.py

toy_city/       a small synthetic city: 12 block groups on a 4x3 grid, 48
                POIs, per-POI review files, factor table, polygons, hand
                labels for a subset of lexicon-matched reviews and external
                sentence scores for half of the POIs.
synthetic_cbg/  a 60-row regression table with known generating
                coefficients for the `pls` subcommand.

Output is fully determined by the seeds below.
"""

import csv
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

FACTORS = [
    "pct_college", "median_income", "pct_white", "pct_african_american",
    "pct_hispanic", "pct_asian", "pct_age_18_44", "pct_age_45_64",
    "pct_age_over_65", "pct_male", "population_density", "bus_stop_density",
    "metro_station_density", "primary_road_density", "secondary_road_density",
    "minor_road_density", "pct_industrial", "pct_institutional", "pct_utilities",
    "pct_commercial", "pct_residential", "lum",
]

NAICS = [
    ("722511", "Grill House"), ("722410", "Corner Tavern"), ("721110", "City Hotel"),
    ("531110", "Park Apartments"), ("445110", "Fresh Market"), ("712110", "Art Museum"),
    ("722513", "Quick Bites"), ("713940", "Fitness Club"),
]

DENSITY_POSITIVE = [
    "Parking was easy and free.",
    "The location is very convenient.",
    "It is a walkable street with great transit options.",
    "Close to the metro station and simple to reach.",
    "Plenty of parking nearby.",
    "Easy to find and accessible by bus.",
    "Great location right next to the park.",
    "Love how walkable this block is!",
]
DENSITY_NEGATIVE = [
    "Parking is terrible and expensive.",
    "Traffic around here is awful.",
    "Congestion on the street is terrible at rush hour.",
    "It is far from any transit stop.",
    "The lot was packed and we could not find parking.",
    "The entrance is hard to navigate and poorly marked.",
    "Horrible traffic and no parking at all!",
]
DENSITY_NEUTRAL = [
    "The parking lot is behind the building.",
    "It is located in the downtown district.",
]
OTHER = [
    "The food was delicious.",
    "Staff were friendly.",
    "Prices are fair.",
    "We had a wonderful time.",
    "The service was slow.",
    "Rooms were clean.",
    "The coffee was bitter.",
    "Would come back again.",
]
INCIDENTAL = [
    "I ordered the pasta and sat near the window.",
    "The outdoor patio had nice music.",
    "The kids area had toys and games.",
    "Best burger in the region.",
    "My neighbor recommended the tacos.",
    "The dessert menu is dense with options.",
]
INCIDENTAL_TAIL = [
    "The fries were crispy.",
    "Our waiter was attentive.",
    "The salsa was homemade.",
    "Dessert was too sweet.",
    "The pizza was cold.",
]
AUTHORS = ["alex", "sam", "jordan", "casey", "riley", "morgan", "taylor", "jamie", "drew", "quinn"]


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def lum(shares):
    present = [p for p in shares if p > 0]
    if len(present) <= 1:
        return 0.0
    return -sum(p * math.log(p) for p in present) / math.log(len(present))


def triple(kind, rng):
    if kind == "pos":
        neg, neu = 0.01 + 0.03 * rng.random(), 0.10 + 0.15 * rng.random()
    elif kind == "neg":
        neg, neu = 0.70 + 0.20 * rng.random(), 0.05 + 0.05 * rng.random()
    else:
        neg, neu = 0.05 + 0.05 * rng.random(), 0.70 + 0.15 * rng.random()
    neg, neu = round(neg, 4), round(neu, 4)
    return neg, neu, round(1.0 - neg - neu, 4)


def write_csv(path, header, rows, comment=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def toy_city():
    rng = random.Random(20240611)
    out = ROOT / "toy_city"
    (out / "reviews").mkdir(parents=True, exist_ok=True)
    for old in (out / "reviews").glob("*.json"):
        old.unlink()

    lon0, lat0, step = -84.40, 33.74, 0.01
    cbgs = []
    for row in range(3):
        for col in range(4):
            cbg_id = f"13121{row:02d}{col:02d}001"
            x0, y0 = lon0 + col * step, lat0 + row * step
            cbgs.append({"id": cbg_id, "box": (x0, y0, x0 + step, y0 + step), "z": rng.gauss(0, 1)})

    features = []
    for c in cbgs:
        x0, y0, x1, y1 = c["box"]
        ring = [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
        features.append({
            "type": "Feature",
            "properties": {"cbg_id": c["id"]},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        })
    with open(out / "cbg_polygons.geojson", "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=1)
        fh.write("\n")

    factor_rows = []
    for c in cbgs:
        z = c["z"]
        white = min(90.0, max(5.0, 45 + 18 * z + rng.gauss(0, 5)))
        black = max(2.0, (100 - white) * (0.75 + 0.1 * rng.random()))
        rest = max(0.0, 100 - white - black)
        split = 0.4 + 0.35 * rng.random()
        hispanic, asian = rest * split, rest * (1 - split)
        young = 40 + 8 * rng.random()
        middle = 25 + 6 * rng.random()
        land = [rng.random() ** 2 for _ in range(5)]
        total = sum(land)
        shares = [v / total for v in land]
        vals = {
            "pct_college": min(95.0, max(5.0, 35 + 12 * z + rng.gauss(0, 6))),
            "median_income": max(15000.0, 55000 + 16000 * z + rng.gauss(0, 6000)),
            "pct_white": white,
            "pct_african_american": black,
            "pct_hispanic": hispanic,
            "pct_asian": asian,
            "pct_age_18_44": young,
            "pct_age_45_64": middle,
            "pct_age_over_65": 100 - young - middle - 18,
            "pct_male": 46 + 6 * rng.random(),
            "population_density": 1500 + 4000 * rng.random(),
            "bus_stop_density": 5 + 30 * rng.random(),
            "metro_station_density": 2 * rng.random(),
            "primary_road_density": 3 * rng.random(),
            "secondary_road_density": 5 * rng.random(),
            "minor_road_density": 10 + 15 * rng.random(),
            "pct_industrial": 100 * shares[0],
            "pct_institutional": 100 * shares[1],
            "pct_utilities": 100 * shares[2],
            "pct_commercial": 100 * shares[3],
            "pct_residential": 100 * shares[4],
            "lum": lum(shares),
        }
        factor_rows.append([c["id"]] + [f"{vals[k]:.4f}" for k in FACTORS])
    write_csv(out / "cbg_factors.csv", ["cbg_id"] + FACTORS, factor_rows)

    pois = []
    n = 0
    for ci, c in enumerate(cbgs):
        x0, y0, x1, y1 = c["box"]
        for k in range(4):
            n += 1
            code, name = NAICS[(ci + 3 * k) % len(NAICS)]
            lon = x0 + 0.001 + (step - 0.002) * rng.random()
            lat = y0 + 0.001 + (step - 0.002) * rng.random()
            pois.append({
                "id": f"poi{n:03d}", "name": f"{name} {n}", "lat": lat, "lon": lon,
                "naics": code, "cbg": c["id"] if n % 2 == 0 else "", "z": c["z"],
            })
    poi_rows = [[p["id"], p["name"], f"{p['lat']:.6f}", f"{p['lon']:.6f}", p["naics"], p["cbg"]] for p in pois]
    poi_rows.append(["poi999", "Broken Row", "95.000000", "-84.390000", "722511", ""])
    write_csv(out / "pois.csv", ["poi_id", "name", "latitude", "longitude", "naics_code", "cbg_id"], poi_rows)

    labels, scores = [], []
    rid = 0
    for pi, p in enumerate(pois):
        n_density = rng.choice([4, 6, 8]) if pi % 7 == 3 else rng.randint(10, 16)
        n_incidental = rng.randint(1, 3)
        n_plain = rng.randint(2, 5)
        kinds = ["density"] * n_density + ["incidental"] * n_incidental + ["plain"] * n_plain
        rng.shuffle(kinds)
        bias = 0.9 * p["z"] + (0.8 if p["naics"] in ("531110", "721110") else 0.0) + rng.gauss(0, 0.3)
        docs = []
        for kind in kinds:
            rid += 1
            review_id = f"{p['id']}-r{rid:04d}"
            sentences = []
            if kind == "density":
                for _ in range(rng.randint(1, 2)):
                    u = rng.random()
                    if u < 0.1:
                        sentences.append(("neu", rng.choice(DENSITY_NEUTRAL)))
                    elif u < 0.1 + 0.9 * sigmoid(bias):
                        sentences.append(("pos", rng.choice(DENSITY_POSITIVE)))
                    else:
                        sentences.append(("neg", rng.choice(DENSITY_NEGATIVE)))
                for _ in range(rng.randint(0, 2)):
                    sentences.append(("neu", rng.choice(OTHER)))
                rng.shuffle(sentences)
            elif kind == "incidental":
                sentences = [("neu", rng.choice(INCIDENTAL)), ("neu", rng.choice(INCIDENTAL_TAIL))]
            else:
                sentences = [("neu", s) for s in rng.sample(OTHER, rng.randint(1, 3))]
            text = " ".join(s for _, s in sentences)
            rating = 5 if kind == "density" and sentences[0][0] == "pos" else rng.randint(2, 5)
            docs.append({
                "review_id": review_id, "author": rng.choice(AUTHORS), "rating": rating,
                "likes": rng.randint(0, 12), "text": text,
            })
            if rng.random() < {"density": 0.1, "incidental": 0.5, "plain": 0.0}[kind]:
                split = "test" if rng.random() < 0.2 else "train"
                labels.append([review_id, "True" if kind == "density" else "False", split])
            if pi % 2 == 0:
                for idx, (pol, _) in enumerate(sentences):
                    scores.append([review_id, idx, *triple(pol, rng)])
        if pi == 5:
            docs.append({"review_id": f"{p['id']}-bad", "author": "x", "rating": 6, "likes": 0,
                         "text": "Parking was fine."})
        with open(out / "reviews" / f"{p['id']}.json", "w", encoding="utf-8") as fh:
            json.dump(docs, fh, indent=1, ensure_ascii=False)
            fh.write("\n")
    with open(out / "reviews" / "ghost.json", "w", encoding="utf-8") as fh:
        json.dump([{"review_id": "ghost-1", "author": "x", "rating": 3, "likes": 0,
                    "text": "Traffic was bad."}], fh, indent=1)
        fh.write("\n")

    write_csv(out / "labels.csv", ["review_id", "label", "split"], labels)
    write_csv(out / "sentence_scores.csv",
              ["review_id", "sentence_index", "p_negative", "p_neutral", "p_positive"], scores)


def synthetic_cbg():
    rng = random.Random(7)
    out = ROOT / "synthetic_cbg"
    out.mkdir(parents=True, exist_ok=True)
    beta = [0.8, -0.5, 0.3, 0.0, 0.0, 0.15]
    names = [f"x{i + 1}" for i in range(len(beta))]
    rows = []
    for i in range(60):
        x = [rng.gauss(0, 1) for _ in beta]
        y = 0.1 + sum(b * v for b, v in zip(beta, x)) + rng.gauss(0, 0.05)
        rows.append([f"cbg{i + 1:03d}"] + [f"{v:.6f}" for v in x] + [f"{y:.6f}"])
    write_csv(out / "cbg_table.csv", ["cbg_id"] + names + ["sentiment"], rows)
    write_csv(out / "generating_coefficients.csv", ["variable", "coefficient"],
              [[n, b] for n, b in zip(names, beta)] + [["intercept", 0.1], ["noise_sd", 0.05]])


if __name__ == "__main__":
    toy_city()
    synthetic_cbg()
