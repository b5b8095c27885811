import json

import pytest


def dataset_records(n_en=3, n_hi=2):
    """Small bilingual fixture; references cite in range (fabrication-free)."""
    records = []
    for i in range(n_en):
        records.append(
            {
                "id": f"en{i}",
                "query": f"What is landmark number {i}?",
                "knowledge": [
                    f"Landmark {i} opened in 188{i}.",
                    f"Landmark {i} stands in city {i}.",
                ],
                "reference": f"According to [1], landmark {i} opened in 188{i}. It stands in city {i} [2].",
                "language": "en",
                "source": "wow",
            }
        )
    for i in range(n_hi):
        records.append(
            {
                "id": f"hi{i}",
                "query": f"स्मारक {i} क्या है?",
                "knowledge": [
                    f"स्मारक {i} सन 188{i} में खुला।",
                    f"स्मारक {i} नगर {i} में है।",
                ],
                "reference": f"[1] के अनुसार स्मारक {i} सन 188{i} में खुला। यह नगर {i} में है [2]।",
                "language": "hi",
                "source": "dstc9",
            }
        )
    return records


def write_dataset(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def bilingual_dataset(tmp_path):
    return write_dataset(tmp_path / "data.jsonl", dataset_records())
