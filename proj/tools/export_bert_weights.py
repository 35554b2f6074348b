#!/usr/bin/env python3
"""Exports a Hugging Face BERT encoder into the layout the pretrained backend
reads: config.json, vocab.txt and one float32 .npy file per tensor, named by
its BertModel state_dict key (pooler excluded).

    python3 tools/export_bert_weights.py bert-base-cased models/bert-base-cased

With --tiny-fixture OUT the script instead builds a small randomly
initialised BERT with a hand-written vocabulary, exports it to OUT and adds
reference.json holding token ids and hidden states for a few sentences.
"""

import argparse
import json
import os

import numpy as np
import torch
from transformers import BertConfig, BertModel, BertTokenizer

CONFIG_KEYS = [
    "vocab_size", "hidden_size", "num_hidden_layers", "num_attention_heads", "intermediate_size",
    "max_position_embeddings", "type_vocab_size", "layer_norm_eps", "initializer_range", "hidden_act",
]


def export(model, vocab_path, out):
    os.makedirs(out, exist_ok=True)
    cfg = model.config.to_dict()
    with open(os.path.join(out, "config.json"), "w") as f:
        json.dump({k: cfg[k] for k in CONFIG_KEYS if k in cfg}, f, indent=2)
    target = os.path.join(out, "vocab.txt")
    if os.path.abspath(vocab_path) != os.path.abspath(target):
        with open(vocab_path, encoding="utf-8") as src, open(target, "w", encoding="utf-8") as dst:
            dst.write(src.read())
    for name, tensor in model.state_dict().items():
        if name.startswith("pooler.") or name.endswith("position_ids"):
            continue
        np.save(os.path.join(out, name + ".npy"), tensor.detach().cpu().numpy().astype(np.float32))


TINY_WORDS = [
    "the", "was", "born", "in", "of", "and", "is", "capital", "works", "for", "city", "founded", "by",
    "Obama", "Honolulu", "USA", "Berlin", "Germany", "Anna", "Acme", "Corp", "president", "lives",
    "un", "##der", "##stand", "##ing", "##s", "##ed", "play", "##ful", ".", ",", "'", "(", ")", "-",
]
TINY_SENTENCES = [
    "Obama was born in Honolulu .",
    "Berlin is the capital of Germany , Anna works for Acme Corp .",
    "understanding plays ( playful ) - Obama's",
    "Zebra unknownword Honolulu",
]


def tiny_fixture(out):
    torch.manual_seed(1234)
    os.makedirs(out, exist_ok=True)
    vocab_path = os.path.join(out, "vocab.txt")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + TINY_WORDS
    with open(vocab_path, "w", encoding="utf-8") as f:
        f.write("\n".join(vocab) + "\n")
    config = BertConfig(vocab_size=len(vocab), hidden_size=32, num_hidden_layers=2, num_attention_heads=4,
                        intermediate_size=64, max_position_embeddings=64, type_vocab_size=2,
                        hidden_act="gelu", hidden_dropout_prob=0.0, attention_probs_dropout_prob=0.0)
    model = BertModel(config, add_pooling_layer=False).eval()
    # Non-trivial LayerNorm parameters so the test exercises them.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "LayerNorm" in name:
                p.add_(0.1 * torch.randn_like(p))
    export(model, vocab_path, out)

    tok = BertTokenizer(vocab=vocab_path, do_lower_case=False, tokenize_chinese_chars=False)
    cases = []
    for text in TINY_SENTENCES:
        ids = tok(text)["input_ids"]
        with torch.no_grad():
            hidden = model(torch.tensor([ids]), token_type_ids=torch.zeros(1, len(ids), dtype=torch.long))
        cases.append({"text": text, "ids": ids, "hidden": hidden.last_hidden_state[0].tolist()})
    with open(os.path.join(out, "reference.json"), "w") as f:
        json.dump(cases, f)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("model", nargs="?", help="model name or local directory")
    ap.add_argument("out", nargs="?", help="output directory")
    ap.add_argument("--tiny-fixture", metavar="OUT")
    args = ap.parse_args()
    if args.tiny_fixture:
        tiny_fixture(args.tiny_fixture)
        return
    if not args.model or not args.out:
        ap.error("model and out are required")
    model = BertModel.from_pretrained(args.model, add_pooling_layer=False).eval()
    tok = BertTokenizer.from_pretrained(args.model)
    vocab_dir = os.path.join(args.out, ".vocab")
    os.makedirs(vocab_dir, exist_ok=True)
    (vocab_file,) = tok.save_vocabulary(vocab_dir)
    export(model, vocab_file, args.out)


if __name__ == "__main__":
    main()
