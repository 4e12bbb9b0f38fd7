import json

import pytest


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A miniature randomly initialized BERT saved locally (no network)."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    model_dir = tmp_path_factory.mktemp("tiny-bert")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
             "the", "a", "good", "bad", "movie", "plot", "great", "awful",
             "##s", "it", "was", "not", "fun", "boring"]
    vocab_file = model_dir / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizerFast.from_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab), hidden_size=16, num_hidden_layers=1,
        num_attention_heads=2, intermediate_size=32,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture()
def write_jsonl(tmp_path):
    def _write(records, name="data.jsonl"):
        path = tmp_path / name
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
        return str(path)

    return _write
