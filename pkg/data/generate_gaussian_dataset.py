import argparse
import os
import sys

# run from the repository root or from data/
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from storage.dataset_loader import gaussian_samples, write_dataset

# Output directory for generated datasets
os.makedirs('data/data', exist_ok=True)

# Experiment scales: name -> (d, n_plus, n)
SCALES = {
    'small': (2, 10, 20),
    'medium': (2, 50, 100),
    'wide': (100, 50, 100),
}


def generate(name, d, n_plus, n, seed, separation, duplicate):
    features, labels = gaussian_samples(d, n_plus, n, seed, separation)
    if duplicate:
        # exact copy of the first positive sample
        features = list(features) + [features[0]]
        labels = list(labels) + [labels[0]]
    path = os.path.join('data/data', f"{name}.txt")
    write_dataset(path, features, labels)
    print(f"Wrote {len(labels)} samples (d={d}, {n_plus} positive) to {path}")
    return path


# Main script
if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Write synthetic two-class Gaussian datasets")
    parser.add_argument('--scale', choices=sorted(SCALES), default='small')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--separation', type=float, default=1.0)
    parser.add_argument('--duplicate', action='store_true', help='Append a copy of one positive sample')
    args = parser.parse_args()

    d, n_plus, n = SCALES[args.scale]
    name = f"gaussian_{args.scale}_seed{args.seed}" + ('_dup' if args.duplicate else '')
    generate(name, d, n_plus, n, args.seed, args.separation, args.duplicate)
