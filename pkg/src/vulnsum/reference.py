"""Reference figures from the original large-scale runs of this pipeline.

These came from live-web harvesting and GPU-scale fine-tuning; they drift
with the web and are not reproducible at fixture scale.  They are kept as
report-rendering references and comparison points only; nothing in the
test suite asserts them.
"""

# CVEs published 2019-2021 at harvest time, and how many survived each gate.
REFERENCE_TOTAL_CVES = 35_657
REFERENCE_DATASET_SIZES = {
    "use": 9_955,
    "mpnet": 8_664,
    "dual": 10_766,
}

# Best fine-tuning rows: (recall, precision, f1, input limit T, beams b,
# batch B) per model family on the dual-encoder corpus.
REFERENCE_ROUGE_ROWS = {
    "bart": (0.52, 0.52, 0.51, 500, 2, 8),
    "t5": (0.47, 0.52, 0.48, 500, 2, 4),
}

# Mean human grades (fluency, completeness, correctness, understanding).
REFERENCE_HUMAN_EVAL = {
    "bart": (2.69, 2.15, 2.16, 2.58),
    "t5": (2.72, 2.07, 2.04, 2.57),
}

# Most frequent entities in the target summaries of the full corpus.
REFERENCE_TOP_ENTITIES = [
    ("XSS", 799), ("N/AC", 523), ("IBM X-Force ID", 463), ("N/S", 343),
    ("Cisco", 336), ("SQL", 334), ("Server", 315), ("JavaScript", 267),
    ("WordPress", 264), ("Jenkins", 240), ("IBM", 237), ("Firefox", 200),
    ("Java", 187), ("VirtualBox", 174), ("PHP", 164), ("Java SE", 150),
    ("Android", 148),
]

# (mean, std) pairs reported for the full corpus: augmented input vs
# target summary, for word, character and sentence counts.
REFERENCE_FIELD_STATS = {
    "words": ((48, 2086), (49, 31)),
    "chars": ((2939, 12370), (279, 186)),
    "sentences": ((43, 184), (7, 5.32)),
}

# Prediction/target similarity distribution centered near this mean.
REFERENCE_SIMILARITY_MEAN = 0.75
