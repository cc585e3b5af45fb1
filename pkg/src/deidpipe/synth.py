"""Synthetic paired image/report cohort with a known identity signal.

Every patient gets a constant intensity offset in a fixed image region (a
watermark a probe can learn), records share one anatomy-like base
pattern, and reports are templated around whitelist findings with
protected terms (names, record numbers, dates, staff, sites, sex)
injected at known spans. The companion lexicon blacklists exactly those
protected terms, so filter recall and projection soundness can be checked
against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeidError
from .lexicon import Lexicon, load_lexicon_json
from .pipeline import Record

FIRST_NAMES = (
    "Aaron Bryce Carmen Dexter Elena Felix Greta Hollis Imogen Jasper "
    "Kendra Lionel Maribel Nolan Odette Pierce Quiana Rosalind Sylvan Tamsin "
    "Ulric Vera Wendell Xiomara Yusuf Zelda Ansel Beatrix Cormac Delphine "
    "Emory Farrah Gideon Harriet Ivo Junia Kelvin Lorna Mathis Nadia "
    "Osric Petra Quentin Romilly Stellan Thea Upton Vivienne Wren Xander "
    "Yolanda Zephyr Alaric Bronwyn Caspian Damaris"
).split()

LAST_NAMES = (
    "Abbott Barlow Caldwell Draper Ellsworth Fairbank Garrick Holloway Ingram Jardine "
    "Kessler Lockhart Merriweather Northcott Oakhurst Pemberton Quimby Rutherford Sheffield Thornbury "
    "Underhill Vance Whitfield Xavier Yardley Zimmerman Ashcroft Billingsley Cranmore Dunmore "
    "Eastgate Fenwick Grantham Hathaway Iverson Jessup Kirkland Lanford Mosely Norwood "
    "Ormsby Prescott Quill Ravenswood Stroud Tilbury Usher Varnell Winslow Xenakis "
    "Yeats Zale Arbogast Bellamy Crowther Dunstable"
).split()

MONTHS = (
    "January February March April May June July August "
    "September October November December"
).split()
DAYS = ("03", "11", "19", "27")
YEARS = ("2023", "2024")

DOCTORS = ("Dr Ellison", "Dr Navarro", "Dr Okafor", "Dr Lindqvist", "Dr Marchetti", "Dr Soderberg")
HOSPITALS = ("Northbrook Memorial", "Eastvale Clinic", "Harborview Center", "Westfield Institute")
SEXES = ("male", "female")

PATHOLOGIES = (
    "cardiomegaly",
    "effusion",
    "edema",
    "pneumothorax",
    "atelectasis",
    "consolidation",
    "opacity",
)

WHITELIST_TERMS = {
    "modality": ("radiograph",),
    "view": ("frontal", "lateral", "pa"),
    "anatomy": ("lungs", "heart", "chest", "mediastinum", "diaphragm", "pleural"),
    "tissue": PATHOLOGIES,
    "descriptor": (
        "clear",
        "normal",
        "unremarkable",
        "stable",
        "mild",
        "moderate",
        "enlarged",
        "small",
        "focal",
        "patchy",
    ),
}

TECH_FILLERS = (
    "technique adequate",
    "acquired upright",
    "inspiration adequate",
    "exposure satisfactory",
)
CLOSERS = (
    "comparison with prior exam available",
    "clinical correlation recommended",
    "no acute osseous abnormality",
    "interval change minimal",
    "findings communicated to the care team",
    "followup imaging as clinically indicated",
)

PATHOLOGY_RATE = 0.35
NOISE_SIGMA = 0.004
WATERMARK_SPAN = 0.8  # intensity range the patient offsets cover
BLOB_AMPLITUDE = 0.015

# Per-record streams use (seed, index); these offsets stay clear of them.
_PATIENT_STREAM = 2**33


@dataclass
class SynthCorpus:
    """Generated records plus their lexicon and injected-term ground truth."""

    records: list[Record]
    lexicon: Lexicon
    ground_truth: dict[str, list[dict]]
    patients: list[str]


def _p(text: str):
    return (text, "plain", None)


def _w(text: str, category: str):
    return (text, "whitelist", category)


def _b(text: str, category: str):
    return (text, "blacklist", category)


def _assemble(sentences) -> tuple[str, list[dict]]:
    """Join piece sentences into text, tracking spans of tagged pieces."""
    parts: list[str] = []
    truth: list[dict] = []
    pos = 0
    for sentence in sentences:
        for text, kind, category in sentence:
            if parts:
                parts.append(" ")
                pos += 1
            start = pos
            parts.append(text)
            pos += len(text)
            if kind != "plain":
                truth.append(
                    {
                        "start": start,
                        "end": pos,
                        "surface": text,
                        "kind": kind,
                        "category": category,
                    }
                )
        parts.append(".")
        pos += 1
    return "".join(parts), truth


def _patient_attrs(index: int, seed: int) -> dict:
    rng = np.random.default_rng((seed, _PATIENT_STREAM + index))
    first = FIRST_NAMES[index % len(FIRST_NAMES)]
    last = LAST_NAMES[(index + index // len(FIRST_NAMES)) % len(LAST_NAMES)]
    return {
        "pid": f"p{index:03d}",
        "name": f"{first} {last}",
        "mrn": f"mrn{70000 + 131 * index}",
        "sex": SEXES[int(rng.integers(len(SEXES)))],
    }


def _report(patient: dict, rng: np.random.Generator) -> tuple[str, list[dict], dict]:
    date = (
        f"{MONTHS[int(rng.integers(len(MONTHS)))]} "
        f"{DAYS[int(rng.integers(len(DAYS)))]} "
        f"{YEARS[int(rng.integers(len(YEARS)))]}"
    )
    doctor = DOCTORS[int(rng.integers(len(DOCTORS)))]
    hospital = HOSPITALS[int(rng.integers(len(HOSPITALS)))]
    flags = {p: bool(rng.random() < PATHOLOGY_RATE) for p in PATHOLOGIES}

    sentences = [
        [
            _p("patient"),
            _b(patient["name"], "patient_id"),
            _b(patient["mrn"], "patient_id"),
            _b(patient["sex"], "demographic"),
            _p("imaged on"),
            _b(date, "date"),
            _p("at"),
            _b(hospital, "institution"),
            _p("by"),
            _b(doctor, "personnel"),
        ],
        [
            _w("frontal", "view"),
            _w("pa", "view"),
            _w("chest", "anatomy"),
            _w("radiograph", "modality"),
            _p(TECH_FILLERS[int(rng.integers(len(TECH_FILLERS)))]),
        ],
    ]

    if flags["cardiomegaly"]:
        if rng.random() < 0.5:
            sentences.append(
                [_p("the"), _w("heart", "anatomy"), _p("is"), _w("enlarged", "descriptor"),
                 _p("with"), _w("cardiomegaly", "tissue")]
            )
        else:
            sentences.append(
                [_w("moderate", "descriptor"), _w("cardiomegaly", "tissue"), _p("is present")]
            )
    else:
        sentences.append(
            [_p("the"), _w("heart", "anatomy"), _p("size is"), _w("normal", "descriptor")]
        )
    if flags["effusion"]:
        sentences.append(
            [_w("small", "descriptor"), _w("pleural", "anatomy"), _w("effusion", "tissue"), _p("is seen")]
        )
    else:
        sentences.append([_p("no"), _w("pleural", "anatomy"), _w("effusion", "tissue")])
    if flags["edema"]:
        sentences.append([_w("mild", "descriptor"), _w("edema", "tissue"), _p("is present")])
    if flags["pneumothorax"]:
        sentences.append(
            [_w("small", "descriptor"), _w("pneumothorax", "tissue"), _p("noted")]
        )
    else:
        sentences.append([_p("no"), _w("pneumothorax", "tissue")])
    if flags["atelectasis"]:
        sentences.append([_w("mild", "descriptor"), _w("atelectasis", "tissue"), _p("is seen at the bases")])
    if flags["consolidation"]:
        sentences.append([_w("focal", "descriptor"), _w("consolidation", "tissue"), _p("is present")])
    else:
        sentences.append([_p("no"), _w("focal", "descriptor"), _w("consolidation", "tissue")])
    if flags["opacity"]:
        sentences.append([_w("patchy", "descriptor"), _w("opacity", "tissue"), _p("is seen")])

    if any(flags.values()):
        sentences.append([_p("the"), _w("lungs", "anatomy"), _p("are otherwise"), _w("stable", "descriptor")])
    else:
        sentences.append([_p("the"), _w("lungs", "anatomy"), _p("are"), _w("clear", "descriptor")])

    picks = rng.permutation(len(CLOSERS))[:2]
    for idx in sorted(int(i) for i in picks):
        sentences.append([_p(CLOSERS[idx])])

    text, truth = _assemble(sentences)
    return text, truth, flags


def _base_pattern(size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    cy, cx = yy * 2.0 - 1.0, xx * 2.0 - 1.0
    base = (
        0.38
        + 0.22 * np.exp(-((cx / 0.22) ** 2))                      # mediastinal band
        - 0.16 * np.exp(-(((cx + 0.52) / 0.42) ** 2 + (cy / 0.72) ** 2))
        - 0.16 * np.exp(-(((cx - 0.52) / 0.42) ** 2 + (cy / 0.72) ** 2))
        - 0.08 * (cy**2)                                          # vignette
    )
    base[: size // 2, size // 2 :] = 0.12  # flat canvas for the watermark
    return np.clip(base, 0.02, 0.9)


def _blob(size: int, row_frac: float, col_frac: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    sigma = 0.08 * size
    return np.exp(
        -(((yy - row_frac * size) ** 2 + (xx - col_frac * size) ** 2) / (2.0 * sigma**2))
    )


# All centers sit clear of the top-right watermark quadrant so pathology
# never contaminates the identity signal.
_BLOB_CENTERS = (
    (0.55, 0.25),
    (0.70, 0.70),
    (0.75, 0.45),
    (0.62, 0.20),
    (0.80, 0.30),
    (0.70, 0.55),
    (0.82, 0.65),
)


def _image(
    size: int,
    patient_index: int,
    n_patients: int,
    flags: dict,
    rng: np.random.Generator,
    base: np.ndarray,
    blobs: dict,
) -> np.ndarray:
    img = base.copy()
    if n_patients > 1:
        offset = WATERMARK_SPAN * patient_index / (n_patients - 1)
    else:
        offset = 0.0
    img[: size // 2, size // 2 :] += offset
    for pathology, active in flags.items():
        if active:
            img += BLOB_AMPLITUDE * blobs[pathology]
    img += rng.normal(0.0, NOISE_SIGMA, img.shape)
    img = np.clip(img, 0.0, 1.0)
    return np.rint(img * 255.0) / 255.0


def _build_lexicon(patients: list[dict]) -> Lexicon:
    import json

    blacklist = []
    for p in patients:
        blacklist.append({"term": p["name"], "category": "patient_id"})
        blacklist.append({"term": p["mrn"], "category": "patient_id"})
    for month in MONTHS:
        for day in DAYS:
            for year in YEARS:
                blacklist.append({"term": f"{month} {day} {year}", "category": "date"})
    blacklist += [{"term": d, "category": "personnel"} for d in DOCTORS]
    blacklist += [{"term": h, "category": "institution"} for h in HOSPITALS]
    blacklist += [{"term": s, "category": "demographic"} for s in SEXES]
    whitelist = [
        {"term": term, "category": category}
        for category, terms in WHITELIST_TERMS.items()
        for term in terms
    ]
    return load_lexicon_json(
        json.dumps({"blacklist": blacklist, "whitelist": whitelist})
    )


def generate_corpus(
    n_records: int,
    n_patients: int,
    seed: int = 0,
    image_size: int = 64,
) -> SynthCorpus:
    """Deterministically generate the cohort; record i belongs to patient i % p."""
    if n_records < 1 or n_patients < 1:
        raise DeidError("n_records and n_patients must be >= 1")
    if image_size < 16:
        raise DeidError("image_size must be >= 16")
    patients = [_patient_attrs(i, seed) for i in range(n_patients)]
    lexicon = _build_lexicon(patients)
    base = _base_pattern(image_size)
    blobs = {
        pathology: _blob(image_size, r, c)
        for pathology, (r, c) in zip(PATHOLOGIES, _BLOB_CENTERS)
    }
    records: list[Record] = []
    ground_truth: dict[str, list[dict]] = {}
    for i in range(n_records):
        rng = np.random.default_rng((seed, i))
        patient_index = i % n_patients
        patient = patients[patient_index]
        report, truth, flags = _report(patient, rng)
        image = _image(image_size, patient_index, n_patients, flags, rng, base, blobs)
        rid = f"r{i:05d}"
        records.append(
            Record(id=rid, patient_id=patient["pid"], image=image, report=report)
        )
        ground_truth[rid] = truth
    return SynthCorpus(
        records=records,
        lexicon=lexicon,
        ground_truth=ground_truth,
        patients=[p["pid"] for p in patients],
    )
