#!/usr/bin/env python3
"""Regenerates everything under fixtures/.

All data here is synthetic. Bundles are drawn from simple generative models,
weather payloads imitate the archive response format, and the task files are
hand-written reconstructions. Output is deterministic.
"""

import json
import math
from datetime import date, timedelta
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2) + "\n")


def fmt(v):
    if isinstance(v, str):
        return v
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v - round(v)) > 1e-12 else str(int(round(v)))


def write_bundle(dir_, meta, columns):
    names = [c["name"] for c in meta["columns"]]
    n = len(columns[names[0]])
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(fmt(columns[name][i]) for name in names))
    dir_.mkdir(parents=True, exist_ok=True)
    (dir_ / "data.csv").write_text("\n".join(lines) + "\n")
    write_json(dir_ / "meta.json", meta)


def cont(name, units=None):
    c = {"name": name, "kind": "continuous"}
    if units:
        c["units"] = units
    return c


def cat(name, cats):
    return {"name": name, "kind": "categorical", "categories": list(cats)}


def pick(rng, labels, probs, n):
    return [labels[i] for i in rng.choice(len(labels), size=n, p=probs)]


def credit(rng, n=240):
    age = np.clip(rng.normal(42, 12, n), 19, 80).round()
    income = np.exp(rng.normal(10.6, 0.45, n)).round(-2)
    debt = rng.beta(2, 5, n).round(3)
    employment = pick(rng, ["salaried", "self_employed", "unemployed"], [0.7, 0.2, 0.1], n)
    housing = pick(rng, ["own", "rent", "free"], [0.45, 0.45, 0.10], n)
    score = 3.0 * debt - (np.log(income) - 10.6) - 0.02 * (age - 42)
    score += np.array([{"salaried": -0.4, "self_employed": 0.1, "unemployed": 1.2}[e] for e in employment])
    score += rng.normal(0, 0.4, n)
    default = np.where(score > np.quantile(score, 0.7), "yes", "no")
    meta = {
        "domain": "finance",
        "description": "Synthetic consumer credit records. Each row is a loan applicant with age in years, "
        "yearly income in euros, debt-to-income ratio, employment type and housing situation. "
        "The target records whether the applicant defaulted within two years.",
        "target": "default",
        "columns": [cont("age", "years"), cont("income", "EUR"), cont("debt_ratio"),
                    cat("employment", ["salaried", "self_employed", "unemployed"]),
                    cat("housing", ["own", "rent", "free"]), cat("default", ["no", "yes"])],
    }
    return meta, {"age": age, "income": income, "debt_ratio": debt, "employment": employment,
                  "housing": housing, "default": list(default)}


def heart(rng, n=240):
    sex = pick(rng, ["female", "male"], [0.45, 0.55], n)
    page = np.clip(rng.normal(55, 9, n), 29, 79).round()
    bp = (rng.normal(120, 15, n) + 0.5 * (page - 55)).round()
    chol = (rng.normal(230, 40, n)).round()
    hr = np.clip(220 - page - rng.normal(15, 12, n), 80, 205).round()
    pain = pick(rng, ["typical", "atypical", "non_anginal", "asymptomatic"], [0.2, 0.2, 0.25, 0.35], n)
    z = 0.05 * (page - 55) + 0.02 * (bp - 120) + 0.01 * (chol - 230) - 0.03 * (hr - 150)
    z += np.array([{"typical": -0.5, "atypical": -0.3, "non_anginal": 0.0, "asymptomatic": 1.0}[p] for p in pain])
    z += np.array([0.4 if s == "male" else -0.2 for s in sex]) + rng.normal(0, 0.5, n)
    disease = np.where(z > np.median(z), "present", "absent")
    meta = {
        "domain": "medicine",
        "description": "Synthetic cardiology outpatient records. Each row is a patient with age, resting "
        "systolic blood pressure in mmHg, serum cholesterol in mg/dl, maximum heart rate reached during "
        "exercise testing, sex and type of chest pain. The target indicates whether coronary heart "
        "disease was diagnosed.",
        "target": "disease",
        "columns": [cont("patient_age", "years"), cont("resting_bp", "mmHg"), cont("cholesterol", "mg/dl"),
                    cont("max_heart_rate", "bpm"), cat("sex", ["female", "male"]),
                    cat("chest_pain", ["typical", "atypical", "non_anginal", "asymptomatic"]),
                    cat("disease", ["absent", "present"])],
    }
    return meta, {"patient_age": page, "resting_bp": bp, "cholesterol": chol, "max_heart_rate": hr,
                  "sex": sex, "chest_pain": pain, "disease": list(disease)}


def wine(rng, n=240):
    acid = rng.normal(8.3, 1.6, n).round(1)
    sugar = np.exp(rng.normal(0.8, 0.4, n)).round(1)
    alcohol = rng.normal(10.4, 1.0, n).round(1)
    sulph = np.clip(rng.normal(0.65, 0.15, n), 0.3, 1.5).round(2)
    ph = (3.3 - 0.05 * (acid - 8.3) + rng.normal(0, 0.1, n)).round(2)
    colour = pick(rng, ["red", "white"], [0.5, 0.5], n)
    z = 0.9 * (alcohol - 10.4) + 2.0 * (sulph - 0.65) - 0.1 * (sugar - 2.2) + rng.normal(0, 0.5, n)
    quality = np.where(z > np.quantile(z, 0.55), "high", "low")
    meta = {
        "domain": "chemistry",
        "description": "Synthetic physicochemical measurements of wine samples: fixed acidity in g/l, "
        "residual sugar in g/l, alcohol in percent by volume, sulphates in g/l, pH and colour. The "
        "target is a quality grade assigned by a tasting panel.",
        "target": "quality",
        "columns": [cont("fixed_acidity", "g/l"), cont("residual_sugar", "g/l"), cont("alcohol", "%"),
                    cont("sulphates", "g/l"), cont("ph"), cat("colour", ["red", "white"]),
                    cat("quality", ["low", "high"])],
    }
    return meta, {"fixed_acidity": acid, "residual_sugar": sugar, "alcohol": alcohol,
                  "sulphates": sulph, "ph": ph, "colour": colour, "quality": list(quality)}


def housing(rng, n=240):
    area = np.clip(rng.normal(95, 30, n), 25, 250).round()
    rooms = np.clip((area / 25 + rng.normal(0, 0.7, n)).round(), 1, 9)
    hage = np.clip(rng.exponential(30, n), 0, 120).round()
    dist = np.clip(rng.gamma(2.0, 4.0, n), 0.3, 40).round(1)
    district = pick(rng, ["north", "south", "east", "west"], [0.25, 0.25, 0.25, 0.25], n)
    z = 0.02 * (area - 95) - 0.08 * (dist - 8) - 0.005 * hage + rng.normal(0, 0.4, n)
    z += np.array([{"north": 0.3, "south": -0.2, "east": 0.0, "west": 0.1}[d] for d in district])
    q1, q2 = np.quantile(z, [1 / 3, 2 / 3])
    band = ["budget" if v <= q1 else "mid" if v <= q2 else "premium" for v in z]
    meta = {
        "domain": "economics",
        "description": "Synthetic residential property listings in a mid-sized city: floor area in square "
        "metres, number of rooms, building age in years, distance to the city centre in km and "
        "district. The target is the asking price band.",
        "target": "price_band",
        "columns": [cont("floor_area", "m2"), cont("rooms"), cont("building_age", "years"),
                    cont("distance_center", "km"), cat("district", ["north", "south", "east", "west"]),
                    cat("price_band", ["budget", "mid", "premium"])],
    }
    return meta, {"floor_area": area, "rooms": rooms, "building_age": hage, "distance_center": dist,
                  "district": district, "price_band": band}


def penguins(rng, n=240):
    species = pick(rng, ["adelie", "chinstrap", "gentoo"], [0.4, 0.25, 0.35], n)
    mu = {"adelie": (38.8, 18.3, 190, 3700), "chinstrap": (48.8, 18.4, 196, 3730),
          "gentoo": (47.5, 15.0, 217, 5080)}
    bl = np.array([rng.normal(mu[s][0], 2.5) for s in species]).round(1)
    bd = np.array([rng.normal(mu[s][1], 1.0) for s in species]).round(1)
    fl = np.array([rng.normal(mu[s][2], 6.5) for s in species]).round()
    bm = np.array([rng.normal(mu[s][3], 420) for s in species]).round(-1)
    island = [{"adelie": ["biscoe", "dream", "torgersen"][rng.integers(3)],
               "chinstrap": "dream", "gentoo": "biscoe"}[s] for s in species]
    meta = {
        "domain": "biology",
        "description": "Synthetic field measurements of adult penguins at an Antarctic research station: "
        "bill length and depth in mm, flipper length in mm, body mass in grams and the island where "
        "the bird was observed. The target is the species.",
        "target": "species",
        "columns": [cont("bill_length", "mm"), cont("bill_depth", "mm"), cont("flipper_length", "mm"),
                    cont("body_mass", "g"), cat("island", ["biscoe", "dream", "torgersen"]),
                    cat("species", ["adelie", "chinstrap", "gentoo"])],
    }
    return meta, {"bill_length": bl, "bill_depth": bd, "flipper_length": fl, "body_mass": bm,
                  "island": island, "species": species}


def wide(rng, n=200, p=19):
    cols = {}
    schema = []
    for j in range(p):
        name = f"x{j + 1:02d}"
        cols[name] = rng.normal(j, 1 + j / 10, n).round(3)
        schema.append(cont(name))
    z = sum(cols[f"x{j + 1:02d}"] - j for j in range(p)) + rng.normal(0, 1, n)
    cols["label"] = list(np.where(z > 0, "pos", "neg"))
    schema.append(cat("label", ["neg", "pos"]))
    meta = {"domain": "synthetic", "description": "Nineteen independent Gaussian measurements and a "
            "binary label driven by their sum.", "target": "label", "columns": schema}
    return meta, cols


def narrow(rng, n=200):
    x = rng.normal(0, 1, n).round(3)
    label = list(np.where(x + rng.normal(0, 0.5, n) > 0, "pos", "neg"))
    meta = {"domain": "synthetic", "description": "One Gaussian measurement and a noisy binary label "
            "thresholding it.", "target": "label", "columns": [cont("x"), cat("label", ["neg", "pos"])]}
    return meta, {"x": x, "label": label}


PERSONA = ("You are a senior practitioner with decades of hands-on experience in this field, "
           "familiar with typical values, units and the relationships between the recorded attributes.")


def column_answers(meta, cols):
    """Mock entries answering each column with its overall mean or mode."""
    out = []
    for c in meta["columns"]:
        values = cols[c["name"]]
        if c["kind"] == "continuous":
            value = round(float(np.mean(values)), 3)
        else:
            labels, counts = np.unique(values, return_counts=True)
            value = str(labels[np.argmax(counts)])
        out.append({"contains": f"The {c['name']} is <missing>.", "response": json.dumps({"output": value})})
    return out


# name, country, lat, lon, population, approx. December mean temperature (C)
# and mean daily precipitation (mm)
CITIES = [
    ("Reykjavik", "Iceland", 64.1466, -21.9426, "large", 0.5, 2.9),
    ("Tromso", "Norway", 69.6492, 18.9553, "small", -3.5, 3.2),
    ("Oslo", "Norway", 59.9139, 10.7522, "large", -2.5, 1.8),
    ("London", "United Kingdom", 51.5072, -0.1276, "large", 6, 1.8),
    ("Hallstatt", "Austria", 47.5622, 13.6493, "small", -1, 3.5),
    ("Madrid", "Spain", 40.4168, -3.7038, "large", 6.5, 1.6),
    ("Cairo", "Egypt", 30.0444, 31.2357, "large", 15.5, 0.2),
    ("Nairobi", "Kenya", -1.2921, 36.8219, "large", 18.5, 2.5),
    ("Lamu", "Kenya", -2.2717, 40.9020, "small", 28, 1.0),
    ("Cape Town", "South Africa", -33.9249, 18.4241, "large", 21, 0.5),
    ("Dubai", "United Arab Emirates", 25.2048, 55.2708, "large", 20, 0.5),
    ("Mumbai", "India", 19.0760, 72.8777, "large", 26, 0.05),
    ("Leh", "India", 34.1526, 77.5771, "small", -8, 0.3),
    ("Singapore", "Singapore", 1.3521, 103.8198, "large", 26.5, 8.5),
    ("Tokyo", "Japan", 35.6762, 139.6503, "large", 7.5, 1.8),
    ("Yakutsk", "Russia", 62.0355, 129.6755, "small", -37, 0.3),
    ("Sydney", "Australia", -33.8688, 151.2093, "large", 22, 2.6),
    ("Alice Springs", "Australia", -23.6980, 133.8807, "small", 29, 1.3),
    ("Queenstown", "New Zealand", -45.0312, 168.6626, "small", 14, 2.8),
    ("Honolulu", "United States", 21.3069, -157.8583, "large", 23.5, 2.2),
    ("Barrow", "United States", 71.2906, -156.7887, "small", -23, 0.2),
    ("New York", "United States", 40.7128, -74.0060, "large", 3, 3.3),
    ("Mexico City", "Mexico", 19.4326, -99.1332, "large", 14, 0.2),
    ("Ushuaia", "Argentina", -54.8019, -68.3030, "small", 8.5, 1.5),
    ("Manaus", "Brazil", -3.1190, -60.0217, "large", 27, 8.0),
]

FIRST_YEAR, LAST_YEAR = 2016, 2025


def slug(name):
    out = ""
    for ch in name:
        if ch.isascii() and ch.isalnum():
            out += ch.lower()
        elif out and not out.endswith("_"):
            out += "_"
    return out.rstrip("_")


def weather_payload(rng, lat, lon, dec_temp, dec_rain):
    # December mean and mean daily rain roughly follow climate normals; the
    # rest of the year is an annual cycle around them
    north = 1.0 if lat >= 0 else -1.0
    amplitude = min(0.25 * abs(lat), 15.0) * north
    scale = dec_rain / 0.27
    start, end = date(FIRST_YEAR, 12, 1), date(LAST_YEAR, 12, 31)
    times, temps, precs = [], [], []
    d = start
    while d <= end:
        doy = d.timetuple().tm_yday
        seasonal = amplitude * (1 - math.cos(2 * math.pi * (doy - 350) / 365.25))
        temps.append(round(dec_temp + seasonal + rng.normal(0, 2.5), 1))
        precs.append(round(float(rng.gamma(0.6, scale)) if rng.random() < 0.45 else 0.0, 1))
        times.append(d.isoformat())
        d += timedelta(days=1)
    return {
        "latitude": lat, "longitude": lon, "generationtime_ms": 0.0, "utc_offset_seconds": 0,
        "timezone": "UTC", "timezone_abbreviation": "UTC", "elevation": 0.0,
        "daily_units": {"time": "iso8601", "temperature_2m_mean": "°C", "precipitation_sum": "mm"},
        "daily": {"time": times, "temperature_2m_mean": temps, "precipitation_sum": precs},
    }


def task(id_, domain, question, family, support, data=None, persona="expert", protocol="direct"):
    t = {"id": id_, "domain": domain, "question": question, "family": family, "support": support,
         "persona": persona, "protocol": protocol}
    if data is not None:
        t["data"] = data
    return t


BETA_TASKS = [
    ("smokers", "public health", "the proportion of adults in a European country who smoke daily", (4, 16)),
    ("vaccinated", "public health", "the share of children fully vaccinated against measles by age two", (18, 2)),
    ("remission", "medicine", "the probability that a patient with early-stage Hodgkin lymphoma is in remission after treatment", (16, 3)),
    ("readmission", "medicine", "the 30-day hospital readmission rate after heart failure", (5, 20)),
    ("placebo", "medicine", "the proportion of patients reporting improvement on placebo in a depression trial", (6, 12)),
    ("side_effect", "medicine", "the rate of mild side effects after a seasonal influenza vaccine", (4, 10)),
    ("left_handed", "psychology", "the proportion of people who are left-handed", (3, 27)),
    ("replication", "psychology", "the replication success rate of published social psychology experiments", (6, 9)),
    ("survey_response", "psychology", "the response rate to an unsolicited online survey", (2, 18)),
    ("recall", "psychology", "the proportion of 20 unrelated words an adult recalls immediately after one presentation", (7, 8)),
    ("free_throw", "sports", "a professional basketball player's free throw success rate", (30, 8)),
    ("penalty", "sports", "the probability that a penalty kick in professional football is scored", (30, 9)),
    ("home_win", "sports", "the share of football league matches won by the home team", (9, 12)),
    ("first_serve", "sports", "the proportion of first serves in for a professional tennis player", (24, 15)),
    ("germination", "agriculture", "the germination rate of commercially sold tomato seeds", (25, 3)),
    ("crop_loss", "agriculture", "the fraction of a wheat harvest lost to pests in a typical year", (3, 25)),
    ("turnout", "politics", "voter turnout in a national parliamentary election in Western Europe", (28, 10)),
    ("incumbent", "politics", "the probability that an incumbent mayor is re-elected", (12, 7)),
    ("churn", "business", "the monthly churn rate of a consumer streaming subscription", (3, 50)),
    ("click_through", "business", "the click-through rate of a display advertisement", (1.2, 100)),
    ("conversion", "business", "the conversion rate of visitors to buyers in an online shop", (2, 60)),
    ("defect", "engineering", "the proportion of defective units in a mature electronics production line", (1, 80)),
    ("uptime", "engineering", "the fraction of days a public bike-sharing station is fully operational", (40, 3)),
    ("cloud_cover", "meteorology", "the fraction of the sky covered by clouds at noon in Hamburg in December", (5, 2)),
    ("rain_day", "meteorology", "the proportion of December days with measurable rain in Lisbon", (7, 11)),
]


def main():
    rng = np.random.default_rng(20240601)
    mock_entries = [{"contains": "Formulate this as an instruction", "response": PERSONA}]
    for name, gen in [("credit", credit), ("heart", heart), ("wine", wine), ("housing", housing),
                      ("penguins", penguins)]:
        meta, cols = gen(rng)
        meta["name"] = name
        write_bundle(ROOT / "bundles" / name, meta, cols)
        mock_entries += column_answers(meta, cols)
    for name, gen in [("wide20", wide), ("two_col", narrow)]:
        meta, cols = gen(rng)
        meta["name"] = name
        write_bundle(ROOT / "mar" / name, meta, cols)
    write_json(ROOT / "mock" / "impute.json", {"entries": mock_entries, "fallback": '{"output": 0}'})

    write_json(ROOT / "mock" / "elicit.json", {
        "entries": [
            {"contains": "Formulate this as an instruction", "response": PERSONA},
            {"contains": "`y ~ beta(alpha, beta)`", "response": "Based on typical values: `y ~ beta(3, 7)`"},
            {"contains": "`y ~ normal(mu, sigma)`", "response": "`y ~ normal(5, 8)`"},
            {"contains": "`y ~ student_t(nu, mu, sigma)`", "response": "`y ~ student_t(5, 5, 8)`"},
            {"contains": "`y ~ gamma(shape, rate)`", "response": "`y ~ gamma(0.8, 0.4)`"},
            {"contains": "`y ~ lognormal(mu, sigma)`", "response": "`y ~ lognormal(0.5, 1.2)`"},
            {"contains": "`y ~ uniform(lower, upper)`", "response": "`y ~ uniform(0, 10)`"},
        ],
        "fallback": "I cannot answer that.",
    })

    # cities and synthetic archive payloads
    cities = [{"name": n, "country": c, "latitude": la, "longitude": lo, "population": p}
              for n, c, la, lo, p, _, _ in CITIES]
    write_json(ROOT / "weather" / "cities.json",
               {"window": {"first": FIRST_YEAR, "last": LAST_YEAR}, "cities": cities})
    for n, _, la, lo, _, t, r in CITIES:
        payload = weather_payload(rng, la, lo, t, r)
        path = ROOT / "weather" / "archive" / f"{slug(n)}_{FIRST_YEAR}-12-01_{LAST_YEAR}-12-31.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, separators=(",", ":")) + "\n")

    # task files
    beta = []
    for id_, domain, q, (a, b) in BETA_TASKS:
        values = np.clip(rng.beta(a, b, 60), 1e-4, 1 - 1e-4).round(4).tolist()
        beta.append(task(id_, domain, q, "beta", [0, 1], {"kind": "inline", "values": values}))
    write_json(ROOT / "tasks" / "beta_tasks.json", beta)

    weather = []
    for n, *_ in CITIES:
        s = slug(n)
        weather.append(task(f"{s}_temperature", "meteorology",
                            f"the daily mean temperature in degrees Celsius in {n} in December",
                            "normal", [None, None], {"kind": "weather", "city": s, "variable": "temperature"}))
        weather.append(task(f"{s}_precipitation", "meteorology",
                            f"the daily precipitation sum in millimetres in {n} in December",
                            "gamma", [0, None], {"kind": "weather", "city": s, "variable": "precipitation"}))
    write_json(ROOT / "tasks" / "weather.json", weather)

    psych = [
        task("iq", "psychology", "the full-scale IQ score of a randomly chosen adult", "normal", [None, None],
             {"kind": "inline", "values": rng.normal(100, 15, 80).round(0).tolist()}),
        task("reaction_time", "psychology", "simple visual reaction time in seconds of a healthy adult",
             "lognormal", [0, None], {"kind": "inline", "values": np.exp(rng.normal(-1.35, 0.2, 80)).round(3).tolist()}),
        task("sleep_hours", "psychology", "nightly sleep duration in hours of university students", "normal",
             [None, None], {"kind": "inline", "values": rng.normal(7.0, 1.1, 80).round(2).tolist()}),
        task("life_satisfaction", "psychology", "life satisfaction on a 0 to 10 scale divided by 10", "beta",
             [0, 1], {"kind": "inline", "values": np.clip(rng.beta(7, 3, 80), 1e-3, 1 - 1e-3).round(3).tolist()}),
        task("big_five_extraversion", "psychology", "the standardized extraversion score of an adult",
             "student_t", [None, None], {"kind": "inline", "values": rng.standard_t(8, 80).round(3).tolist()}),
    ]
    write_json(ROOT / "tasks" / "psychology.json", psych)


if __name__ == "__main__":
    main()
