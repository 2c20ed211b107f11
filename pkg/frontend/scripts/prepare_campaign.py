"""Build a small synthetic campaign with pending bootstrap review tasks.

Usage: python3 prepare_campaign.py <campaign-dir>
Prints the number of pending tasks on success.
"""

import sys
from pathlib import Path

from plud.campaign import Campaign, CampaignConfig, SamplingStrategy, TrainSettings
from plud.clustering import ClusterConfig
from plud.synthetic import balanced_pool, build_dataset, mode_means


def main() -> int:
    target = Path(sys.argv[1])
    labels = ["left", "middle", "right"]
    means, label_of = mode_means(labels, 1, 8, seed=3)
    specimens = balanced_pool(labels, label_of, 90, 12, seed=4, subjects=5)
    dataset = build_dataset(specimens, means, noise_sd=0.15, seed=5)
    paths = dataset.write(target / "data")
    config = CampaignConfig(
        name="ui-contract",
        seed=3,
        sampling=SamplingStrategy(size=60, seed=3),
        cluster=ClusterConfig(k=4, seed=3, restarts=3),
        train=TrainSettings(architecture="linear", epochs=10, seed=3),
    )
    campaign = Campaign.create(target / "campaign", config)
    campaign.ingest(paths["manifest"], paths["embeddings"], paths["test_labels"])
    campaign.add_truth(dataset.truth)
    tasks = campaign.begin_bootstrap()
    campaign.close()
    print(len(tasks))
    return 0


if __name__ == "__main__":
    sys.exit(main())
