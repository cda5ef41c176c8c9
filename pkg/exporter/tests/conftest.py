import json
import os
import random

import pytest
import torch

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

CLINICAL_WORDS = """
patient presents with progressive memory loss and word finding difficulty
over the past two years neurological exam shows mild tremor and gait
instability mmse score stable on donepezil follow up in six months family
reports increased confusion at night sleep disturbance improved with
melatonin blood pressure controlled medication list reviewed no acute
distress cranial nerves intact strength normal reflexes symmetric sensation
preserved coordination slightly impaired mri brain shows moderate atrophy
hippocampal volume reduced ventricles enlarged no acute infarct impression
probable neurodegenerative process plan continue current therapy repeat
imaging next visit counseling provided regarding driving safety home
support services discussed daughter present for visit orientation to person
place partially impaired recall zero of three objects at five minutes
language fluent naming intact attention reduced serial sevens difficult
mood mildly depressed affect appropriate judgment fair insight limited
""".split()


def _write_vocab(path):
    pieces = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    seen = set(pieces)
    for word in CLINICAL_WORDS:
        if word not in seen:
            pieces.append(word)
            seen.add(word)
    for ch in "abcdefghijklmnopqrstuvwxyz0123456789":
        for tok in (ch, f"##{ch}"):
            if tok not in seen:
                pieces.append(tok)
                seen.add(tok)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(pieces) + "\n")
    return len(pieces)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A tiny BERT-architecture checkpoint saved in the standard layout."""
    from transformers import BertConfig, BertModel

    d = tmp_path_factory.mktemp("tiny-bert")
    vocab_size = _write_vocab(d / "vocab.txt")
    (d / "tokenizer_config.json").write_text(json.dumps(
        {"tokenizer_class": "BertTokenizer", "do_lower_case": True}))
    config = BertConfig(vocab_size=vocab_size, hidden_size=768,
                        num_hidden_layers=2, num_attention_heads=12,
                        intermediate_size=256, max_position_embeddings=512)
    torch.manual_seed(20240613)
    model = BertModel(config)
    model.eval()
    model.save_pretrained(d)
    return str(d)


# Abbreviations and dosages are not in the tiny vocabulary, so they split
# into wordpieces the way rare tokens do under a real clinical vocabulary.
ABBREVIATIONS = ["25mg", "10mg", "qhs", "prn", "b12", "tid", "bid", "moca24",
                 "apoe4", "t2dm", "htn", "cn2", "wnl"]


def clinical_note(seed, n_chars):
    """Clinical-style running text of exactly n_chars characters."""
    rng = random.Random(seed)
    words = []
    length = 0
    while length < n_chars:
        if rng.random() < 0.22:
            word = ABBREVIATIONS[rng.randrange(len(ABBREVIATIONS))]
        else:
            word = CLINICAL_WORDS[rng.randrange(len(CLINICAL_WORDS))]
        words.append(word)
        length += len(word) + 1
    return " ".join(words)[:n_chars]


@pytest.fixture(scope="session")
def sample_notes():
    return [clinical_note(seed, 1400 + 97 * (seed % 13)) for seed in range(20)]
