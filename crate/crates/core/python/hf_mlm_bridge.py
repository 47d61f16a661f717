"""Line-delimited JSON server exposing a transformers masked LM.

Requests arrive on stdin, one JSON object per line, and each gets exactly one
JSON response line on stdout. Errors are reported as {"error": "..."}.
"""

import argparse
import json
import os
import sys
import tempfile


def fail(message):
    return {"error": message}


class Bridge:
    def __init__(self, args):
        import torch
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self.torch = torch
        torch.manual_seed(args.seed)
        torch.use_deterministic_algorithms(True, warn_only=True)
        if args.tiny_random:
            self.backend_id = "tiny-random-bert"
            self.tokenizer, self.model = self._tiny(args)
        else:
            self.backend_id = args.backend_id or os.path.basename(args.model.rstrip("/"))
            self.tokenizer = AutoTokenizer.from_pretrained(args.model, use_fast=True)
            self.model = AutoModelForMaskedLM.from_pretrained(args.model)
        self.model.eval()
        self.lr = args.learning_rate
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=self.lr)
        self.max_len = min(int(self.tokenizer.model_max_length or 512), 512)
        self.seen = 0
        self.vocab = self._vocabulary()

    def _tiny(self, args):
        from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

        words = [w for w in args.tiny_words.split(",") if w]
        letters = [chr(c) for c in range(ord("a"), ord("z") + 1)] + list("0123456789")
        vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + list(".,!?'-:;/()")
        vocab += letters + ["##" + c for c in letters] + words
        seen, ordered = set(), []
        for v in vocab:
            if v not in seen:
                seen.add(v)
                ordered.append(v)
        try:
            tokenizer = BertTokenizerFast(vocab={w: i for i, w in enumerate(ordered)}, do_lower_case=True)
        except TypeError:
            tokenizer = None
        if tokenizer is None or len(tokenizer) != len(ordered):
            # older releases only accept a vocab file
            self._tmp = tempfile.TemporaryDirectory()
            path = os.path.join(self._tmp.name, "vocab.txt")
            with open(path, "w") as f:
                f.write("\n".join(ordered) + "\n")
            tokenizer = BertTokenizerFast(vocab_file=path, do_lower_case=True)
        config = BertConfig(
            vocab_size=len(ordered),
            hidden_size=16,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=32,
            max_position_embeddings=128,
        )
        return tokenizer, BertForMaskedLM(config)

    def _vocabulary(self):
        size = self.model.get_output_embeddings().weight.shape[0]
        names = self.tokenizer.convert_ids_to_tokens(list(range(min(size, len(self.tokenizer)))))
        names = [n if n is not None else "<id-%d>" % i for i, n in enumerate(names)]
        names += ["<id-%d>" % i for i in range(len(names), size)]
        taken, unique = set(), []
        for i, n in enumerate(names):
            if n in taken:
                n = "%s<id-%d>" % (n, i)
            taken.add(n)
            unique.append(n)
        return unique

    def family(self):
        name = type(self.tokenizer).__name__.lower()
        if "albert" in name or "xlnet" in name or "t5" in name or "camembert" in name:
            return "sentence-piece"
        if "roberta" in name or "gpt2" in name or "bart" in name:
            return "byte-pair"
        return "word-piece"

    def describe(self, _req):
        return {
            "backend_id": self.backend_id,
            "tokenizer_family": self.family(),
            "vocabulary": self.vocab,
            "max_sequence_length": self.max_len,
            "parameter_count": sum(p.numel() for p in self.model.parameters()),
            "mask_token": self.tokenizer.mask_token,
            "seen": self.seen,
        }

    def tokenize(self, req):
        return {"tokens": self.tokenizer.tokenize(req["text"])}

    def mask_target(self, req):
        words, index = req["words"], req["index"]
        if not 0 <= index < len(words):
            return fail("word index %d out of range" % index)
        text = " ".join(words)
        start = sum(len(w) + 1 for w in words[:index])
        end = start + len(words[index])
        enc = self.tokenizer(text, add_special_tokens=False, return_offsets_mapping=True)
        covering = [
            i for i, (s, e) in enumerate(enc["offset_mapping"]) if e > s and s < end and e > start
        ]
        if len(covering) != 1:
            return {"token": None}
        s, e = enc["offset_mapping"][covering[0]]
        if s > start or e < end:
            return {"token": None}
        if enc["input_ids"][covering[0]] == self.tokenizer.unk_token_id:
            return {"token": None}
        return {"token": self.vocab[enc["input_ids"][covering[0]]]}

    def predict(self, req):
        torch = self.torch
        enc = self.tokenizer(req["text"], return_tensors="pt")
        ids = enc["input_ids"][0]
        if ids.shape[0] > self.max_len:
            return fail("too long: %d > %d" % (ids.shape[0], self.max_len))
        positions = (ids == self.tokenizer.mask_token_id).nonzero().flatten().tolist()
        if len(positions) != 1:
            return fail("expected one mask token, found %d" % len(positions))
        self.model.eval()
        with torch.no_grad():
            logits = self.model(**enc).logits[0, positions[0]]
        return {"scores": logits.double().tolist()}

    def train_step(self, req):
        torch = self.torch
        batch = req["batch"]
        if not batch:
            return fail("empty batch")
        enc = self.tokenizer(
            batch,
            truncation=True,
            max_length=self.max_len,
            padding=True,
            return_tensors="pt",
            return_special_tokens_mask=True,
        )
        special = enc.pop("special_tokens_mask").bool()
        maskable = ~special & enc["attention_mask"].bool()
        gen = torch.Generator().manual_seed((req["seed"] ^ (self.seen * 0x9E3779B97F4A7C15)) & 0xFFFFFFFFFFFFFFFF)
        chosen = (torch.rand(maskable.shape, generator=gen) < req["mask_probability"]) & maskable
        for row in range(chosen.shape[0]):
            if maskable[row].any() and not chosen[row].any():
                candidates = maskable[row].nonzero().flatten()
                pick = candidates[torch.randint(len(candidates), (1,), generator=gen)]
                chosen[row, pick] = True
        labels = enc["input_ids"].clone()
        labels[~chosen] = -100
        enc["input_ids"][chosen] = self.tokenizer.mask_token_id
        self.model.train()
        loss = self.model(**enc, labels=labels).loss
        loss.backward()
        self.optimizer.step()
        self.optimizer.zero_grad()
        self.model.eval()
        self.seen += len(batch)
        return {"loss": float(loss.item()), "seen": self.seen}

    def save(self, req):
        path = req["path"]
        os.makedirs(path, exist_ok=True)
        self.model.save_pretrained(path)
        self.tokenizer.save_pretrained(path)
        self.torch.save(self.optimizer.state_dict(), os.path.join(path, "optimizer.pt"))
        with open(os.path.join(path, "bridge_state.json"), "w") as f:
            json.dump({"seen": self.seen, "backend_id": self.backend_id}, f)
        return {"path": path}

    def load(self, req):
        from transformers import AutoModelForMaskedLM

        path = req["path"]
        state_path = os.path.join(path, "bridge_state.json")
        if not os.path.exists(state_path):
            return fail("no checkpoint at %s" % path)
        self.model = AutoModelForMaskedLM.from_pretrained(path)
        self.model.eval()
        self.optimizer = self.torch.optim.AdamW(self.model.parameters(), lr=self.lr)
        self.optimizer.load_state_dict(self.torch.load(os.path.join(path, "optimizer.pt")))
        with open(state_path) as f:
            self.seen = json.load(f)["seen"]
        return {"seen": self.seen}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--model", default="")
    parser.add_argument("--backend-id", default="")
    parser.add_argument("--learning-rate", type=float, default=5e-5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tiny-random", action="store_true")
    parser.add_argument("--tiny-words", default="")
    args = parser.parse_args()
    try:
        bridge = Bridge(args)
    except Exception as exc:  # reported to the caller, which owns the process
        sys.stdout.write(json.dumps(fail("startup: %s" % exc)) + "\n")
        sys.stdout.flush()
        return
    sys.stdout.write(json.dumps({"ready": True}) + "\n")
    sys.stdout.flush()
    handlers = {
        "describe": bridge.describe,
        "tokenize": bridge.tokenize,
        "mask_target": bridge.mask_target,
        "predict": bridge.predict,
        "train_step": bridge.train_step,
        "save": bridge.save,
        "load": bridge.load,
    }
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            handler = handlers.get(req.get("op"))
            resp = handler(req) if handler else fail("unknown op %r" % req.get("op"))
        except Exception as exc:
            resp = fail("%s: %s" % (type(exc).__name__, exc))
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
