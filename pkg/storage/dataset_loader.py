# storage/dataset_loader.py
import logging
from dataclasses import dataclass, field

import numpy as np

from config import B_CONST
from errors import ParseError, EmptyClass

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    """
    Label-folded, bias-augmented training matrix.

    Column i of X is y_i [x_i, B]; positives occupy columns 0..n_plus-1.
    `permutation[i]` is the input position of column i.
    """
    X: np.ndarray
    n_plus: int
    B: float
    feature_dim_raw: int
    permutation: tuple = field(default=())

    @property
    def d(self):
        return self.X.shape[0]

    @property
    def n_samples(self):
        return self.X.shape[1]

    @property
    def n_minus(self):
        return self.n_samples - self.n_plus

    @property
    def labels(self):
        y = -np.ones(self.n_samples)
        y[:self.n_plus] = 1.0
        return y

    def is_positive(self, i):
        return i < self.n_plus

    def upper_bounds(self, c_plus, c_minus):
        """Per-sample box bound: C+ for positives, C- for negatives"""
        bounds = np.full(self.n_samples, float(c_minus))
        bounds[:self.n_plus] = float(c_plus)
        return bounds

    def raw_features(self):
        """Unfolded features (N x (d-1)) in the stored, positives-first order"""
        return (self.X[:-1, :] * self.labels).T.copy()

    @classmethod
    def from_arrays(cls, features, labels, B=B_CONST):
        """
        Build a dataset from raw features and +/-1 labels

        Args:
            features (array-like): N x p raw features
            labels (array-like): N labels in {+1, -1}
            B (float): augmentation constant

        Returns:
            Dataset: folded, augmented, positives first
        """
        features = np.atleast_2d(np.asarray(features, dtype=float))
        labels = np.asarray(labels, dtype=float).ravel()
        if features.shape[0] != labels.shape[0]:
            raise ParseError(f"{features.shape[0]} samples but {labels.shape[0]} labels")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ParseError("labels must be +1 or -1")

        positives = np.flatnonzero(labels > 0)
        negatives = np.flatnonzero(labels < 0)
        if positives.size == 0 or negatives.size == 0:
            raise EmptyClass(f"dataset has {positives.size} positive and {negatives.size} negative samples")

        order = np.concatenate([positives, negatives])
        augmented = np.hstack([features[order], np.full((order.size, 1), float(B))])
        X = (augmented * labels[order][:, None]).T
        return cls(
            X=np.ascontiguousarray(X),
            n_plus=int(positives.size),
            B=float(B),
            feature_dim_raw=features.shape[1],
            permutation=tuple(int(k) for k in order)
        )

    def with_duplicate(self, i):
        """Copy with an exact duplicate of sample i appended to its class block"""
        position = self.n_plus if self.is_positive(i) else self.n_samples
        X = np.insert(self.X, position, self.X[:, i], axis=1)
        permutation = list(self.permutation or range(self.n_samples))
        permutation.insert(position, max(permutation) + 1)
        return Dataset(
            X=X,
            n_plus=self.n_plus + (1 if self.is_positive(i) else 0),
            B=self.B,
            feature_dim_raw=self.feature_dim_raw,
            permutation=tuple(permutation)
        )


def parse_line(line, line_number):
    """
    Parse one `label index:value ...` line

    Args:
        line (str): Raw text line without the trailing newline
        line_number (int): 1-based line number for error reports

    Returns:
        tuple: (label, {index: value}) with 1-based feature indices
    """
    tokens = []
    position = 0
    for chunk in line.split(' '):
        tokens.append((chunk, position + 1))
        position += len(chunk) + 1
    tokens = [(tok, col) for tok, col in tokens if tok != '']
    if not tokens:
        raise ParseError("empty sample line", line_number, 1)

    label_text, label_col = tokens[0]
    if label_text in ('+1', '1'):
        label = 1
    elif label_text == '-1':
        label = -1
    else:
        raise ParseError(f"label must be +1 or -1, got {label_text!r}", line_number, label_col)

    values = {}
    last_index = 0
    for token, col in tokens[1:]:
        if ':' not in token:
            raise ParseError(f"expected index:value, got {token!r}", line_number, col)
        index_text, value_text = token.split(':', 1)
        try:
            index = int(index_text)
        except ValueError:
            raise ParseError(f"bad feature index {index_text!r}", line_number, col)
        if index <= last_index:
            raise ParseError(f"feature indices must be ascending and >= 1, got {index}", line_number, col)
        try:
            value = float(value_text)
        except ValueError:
            raise ParseError(f"bad feature value {value_text!r}", line_number, col + len(index_text) + 1)
        values[index] = value
        last_index = index
    return label, values


def load_dataset(path, B=B_CONST):
    """
    Load a sparse `label index:value` text file into a Dataset

    Args:
        path (str): Dataset file
        B (float): augmentation constant

    Returns:
        Dataset: folded, augmented, positives reordered first
    """
    labels = []
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip('\r\n')
            if line.strip() == '':
                continue
            label, values = parse_line(line, line_number)
            labels.append(label)
            rows.append(values)

    if not rows:
        raise EmptyClass(f"no samples in {path}")

    dim = max((max(r) for r in rows if r), default=0)
    features = np.zeros((len(rows), dim))
    for k, values in enumerate(rows):
        for index, value in values.items():
            features[k, index - 1] = value

    data = Dataset.from_arrays(features, labels, B)
    logger.info(f"Loaded {data.n_samples} samples ({data.n_plus} positive) with {dim} features from {path}")
    return data


def write_dataset(path, features, labels):
    """Write raw features and labels in the sparse text format"""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    with open(path, 'w', encoding='utf-8') as f:
        for row, label in zip(features, labels):
            parts = ['+1' if label > 0 else '-1']
            parts.extend(f"{k + 1}:{value:.17g}" for k, value in enumerate(row) if value != 0.0)
            f.write(' '.join(parts) + '\n')
    logger.info(f"Wrote {features.shape[0]} samples to {path}")


def gaussian_samples(d, n_plus, n, seed=0, separation=1.0, sigma=1.0):
    """
    Draw two Gaussian classes N(+mu, sigma^2 I) and N(-mu, sigma^2 I)

    Returns:
        tuple: (features N x d, labels N)
    """
    if not 0 < n_plus < n:
        raise EmptyClass(f"need 0 < n_plus < n, got n_plus={n_plus}, n={n}")
    rng = np.random.default_rng(seed)
    mu = np.full(d, separation / np.sqrt(d))
    positives = rng.normal(mu, sigma, size=(n_plus, d))
    negatives = rng.normal(-mu, sigma, size=(n - n_plus, d))
    features = np.vstack([positives, negatives])
    labels = np.concatenate([np.ones(n_plus), -np.ones(n - n_plus)])
    return features, labels


def make_gaussian_dataset(d, n_plus, n, seed=0, separation=1.0, sigma=1.0, B=B_CONST):
    """Synthetic dataset of the experiment scales (e.g. d=2, N+=50, N=100)"""
    features, labels = gaussian_samples(d, n_plus, n, seed, separation, sigma)
    return Dataset.from_arrays(features, labels, B)
