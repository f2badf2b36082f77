import logging
import os
import re
import string
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..models.text_models import Dataset, Example, Split, Vocabulary
from ..utils.exceptions import DatasetError

logger = logging.getLogger(__name__)

_PUNCTUATION = string.punctuation


def tokenize(text: str) -> List[str]:
    """
    Lowercases, splits on whitespace and strips leading/trailing punctuation from each token.

    A token made only of punctuation is kept as is, so only whitespace-only input
    yields an empty list.
    """
    tokens = []
    for raw in text.lower().split():
        stripped = raw.strip(_PUNCTUATION)
        tokens.append(stripped if stripped else raw)
    return tokens


def build_vocab(texts: Iterable[str]) -> Vocabulary:
    """One id per distinct token in first-occurrence order, after the reserved ids."""
    vocab = Vocabulary()
    seen_any = False
    for text in texts:
        for tok in tokenize(text):
            vocab.add(tok)
            seen_any = True
    if not seen_any:
        raise DatasetError("Cannot build a vocabulary from an empty corpus.")
    return vocab


def _label_mapping(raw_labels: Sequence[str]) -> List[str]:
    distinct = set(raw_labels)
    if all(re.fullmatch(r"\d+", lab) for lab in distinct):
        ids = sorted(int(lab) for lab in distinct)
        if ids == list(range(len(ids))):
            return [str(i) for i in ids]
    return sorted(distinct)


def load_csv(path: str, text_column: str = "text", label_column: str = "label",
             vocabulary: Optional[Vocabulary] = None, split: Split = "train",
             label_names: Optional[List[str]] = None) -> Dataset:
    """
    Loads a UTF-8, comma-delimited CSV with a header row into a Dataset.

    Labels are mapped by sorted label-string order unless they already form the
    contiguous id set 0..M-1. Pass the training split's `vocabulary` and
    `label_names` when loading validation/test files so ids agree.

    Raises:
        DatasetError: missing file or column, empty file, or an unparseable/empty row
                      (the 1-based row number, header = row 1, is reported).
    """
    if not os.path.exists(path):
        raise DatasetError(f"Dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"Dataset file {path} is empty.") from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) if match else None
        raise DatasetError(f"Could not parse {path}: {e}", row=row) from e
    except UnicodeDecodeError as e:
        raise DatasetError(f"Dataset file {path} is not valid UTF-8: {e}") from e

    for column in (text_column, label_column):
        if column not in frame.columns:
            raise DatasetError(f"Column '{column}' not found in {path}. Available: {', '.join(frame.columns)}")
    if frame.empty:
        raise DatasetError(f"Dataset file {path} has a header but no rows.")

    texts = frame[text_column].tolist()
    raw_labels = [lab.strip() for lab in frame[label_column].tolist()]
    for i, (text, lab) in enumerate(zip(texts, raw_labels)):
        if not text.strip():
            raise DatasetError(f"Empty text in column '{text_column}'", row=i + 2)
        if not lab:
            raise DatasetError(f"Empty label in column '{label_column}'", row=i + 2)

    names = list(label_names) if label_names is not None else _label_mapping(raw_labels)
    index = {name: i for i, name in enumerate(names)}
    if vocabulary is None:
        vocabulary = build_vocab(texts)

    examples = []
    for i, (text, lab) in enumerate(zip(texts, raw_labels)):
        if lab not in index:
            raise DatasetError(f"Label '{lab}' is not one of {names}", row=i + 2)
        examples.append(Example(token_ids=vocabulary.encode(tokenize(text)), label=index[lab], text=text))

    dataset = Dataset(examples=examples, num_classes=len(names), split=split,
                      label_names=names, vocabulary=vocabulary)
    logger.info(f"Loaded {len(dataset)} examples from {path} ({split}); class distribution: {dataset.class_distribution()}")
    return dataset


def write_csv(dataset: Dataset, path: str, text_column: str = "text", label_column: str = "label") -> None:
    """Writes texts and label names back out in the format `load_csv` reads."""
    rows = []
    for ex in dataset.examples:
        text = ex.text if ex.text is not None else " ".join(dataset.vocabulary.decode(ex.token_ids))
        rows.append({text_column: text, label_column: dataset.label_name(ex.label)})
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(rows, columns=[text_column, label_column]).to_csv(
        path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info(f"Wrote {len(rows)} examples to {path}")


def split_dataset(dataset: Dataset, ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
                  seed: int = 0) -> Tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle into train/validation/test by `ratios`."""
    n = len(dataset)
    if n < 3:
        raise DatasetError(f"Need at least 3 examples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(ratios[0] * n)))
    n_val = max(1, int(round(ratios[1] * n)))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    splits = []
    for tag, idx in zip(("train", "validation", "test"), parts):
        part = dataset.subset(sorted(int(i) for i in idx))
        part.split = tag
        splits.append(part)
    return splits[0], splits[1], splits[2]
