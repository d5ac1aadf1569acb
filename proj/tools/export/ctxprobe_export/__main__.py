import argparse
import sys

from .export import ExportError, export_weights
from .goldens import dump_goldens, dump_tokenizer_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(prog="ctxprobe-export", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    w = sub.add_parser("export-weights", help="checkpoint -> model directory")
    w.add_argument("checkpoint_id", help="hub id (e.g. bert-base-uncased) or local checkpoint directory")
    w.add_argument("out_dir")
    w.add_argument("--probe-sentences", help="file with one sentence per line, recorded in the manifest")
    g = sub.add_parser("dump-goldens", help="reference activations for every sentence")
    g.add_argument("model_dir")
    g.add_argument("sentences_file")
    g.add_argument("out_dir")
    g.add_argument("--max-len", type=int, default=128)
    t = sub.add_parser("dump-tokenizer", help="reference WordPiece tokenizations as JSON lines")
    t.add_argument("vocab_file")
    t.add_argument("sentences_file")
    t.add_argument("out_path")
    args = ap.parse_args(argv)
    try:
        if args.command == "export-weights":
            probes = None
            if args.probe_sentences:
                probes = [s for s in open(args.probe_sentences, encoding="utf-8").read().split("\n") if s.strip()]
            print(export_weights(args.checkpoint_id, args.out_dir, probes))
        elif args.command == "dump-goldens":
            print(dump_goldens(args.model_dir, args.sentences_file, args.out_dir, args.max_len))
        else:
            print(dump_tokenizer_corpus(args.vocab_file, args.sentences_file, args.out_path))
    except ExportError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
