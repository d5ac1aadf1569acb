#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "ctxprobe/error.hpp"
#include "ctxprobe/report.hpp"

namespace {

struct Flags {
  ctxprobe::CommandOptions opt;
  std::string pooling = "first_piece";
  std::string sa_capture = "post_projection_pre_residual";
  std::string static_kind = "word_table_row";
  std::string format = "csv";
  std::string kind = "lr";
  bool no_standardize = false;
};

void add_policy_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--pooling", f.pooling, "Multi-piece keyword pooling")
      ->check(CLI::IsMember({"first_piece", "mean_pieces", "last_piece"}))
      ->capture_default_str();
  cmd->add_option("--sa-capture", f.sa_capture, "Self-attention capture point")
      ->check(CLI::IsMember({"post_projection_pre_residual", "post_attention_layernorm"}))
      ->capture_default_str();
  cmd->add_option("--static-kind", f.static_kind, "Static (layer 0) embedding")
      ->check(CLI::IsMember({"word_table_row", "embedding_layer_output"}))
      ->capture_default_str();
}

void add_output_flags(CLI::App* cmd, Flags& f, bool with_format) {
  cmd->add_option("--out", f.opt.out, "Output file")->required();
  if (with_format) {
    cmd->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  }
}

void print(const ctxprobe::CommandResult& r) {
  for (const auto& w : r.warnings) std::fprintf(stderr, "%s\n", w.c_str());
  std::printf("%s\n", r.summary.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-layer contextualization analysis for BERT-style encoders"};
  app.set_version_flag("--version", std::string(ctxprobe::tool_version()));
  app.require_subcommand(1);
  Flags f;
  std::string manifest_path, rerun_md;

  auto* extract = app.add_subcommand("extract", "Encode a dataset and write a trace store");
  extract->add_option("--model-dir", f.opt.model_dir, "Exported model directory")->envname("CTXPROBE_MODEL_DIR");
  extract->add_option("--dataset", f.opt.dataset, "Dataset (.csv CPWS or .jsonl)")->required();
  extract->add_option("--dataset-id", f.opt.dataset_id, "Dataset identifier (default: file stem)");
  extract->add_option("--max-len", f.opt.max_len, "Maximum pieces per sentence")->capture_default_str();
  extract->add_option("--threads", f.opt.threads, "Worker threads")->capture_default_str();
  add_policy_flags(extract, f);
  add_output_flags(extract, f, false);

  for (const char* name : {"similarity", "pca"}) {
    auto* cmd = app.add_subcommand(name, std::string(name) == "similarity"
                                             ? "SubLayerSim and WESim curves per layer"
                                             : "Average similarities and PCA squared-L2 distances per sub-layer");
    cmd->add_option("--store", f.opt.store, "Trace store from extract")->required();
    cmd->add_flag("--skip-incomplete-pairs", f.opt.skip_incomplete_pairs, "Drop pairs with a skipped member");
    add_output_flags(cmd, f, true);
  }

  auto* probe = app.add_subcommand("probe", "12x3 grid of linear sense probes");
  probe->add_option("--store", f.opt.store, "Trace store from extract")->required();
  probe->add_option("--kind", f.kind, "Classifier")->check(CLI::IsMember({"lr", "svm"}))->capture_default_str();
  probe->add_option("--seed", f.opt.seed, "Split seed")->capture_default_str();
  probe->add_option("--threads", f.opt.threads, "Cells trained concurrently")->capture_default_str();
  probe->add_option("--train-ratio", f.opt.probe.train_ratio, "Train fraction")->capture_default_str();
  probe->add_option("--lr-c", f.opt.probe.lr.c, "LR inverse regularization strength")->capture_default_str();
  probe->add_option("--lr-max-iter", f.opt.probe.lr.max_iter, "LR iteration budget")->capture_default_str();
  probe->add_option("--lr-tol", f.opt.probe.lr.tol, "LR relative gradient tolerance")->capture_default_str();
  probe->add_option("--svm-c", f.opt.probe.svm.c, "SVM inverse regularization strength")->capture_default_str();
  probe->add_option("--svm-epochs", f.opt.probe.svm.epochs, "SVM epoch budget")->capture_default_str();
  probe->add_flag("--no-standardize", f.no_standardize, "Disable feature standardization");
  add_output_flags(probe, f, true);

  auto* report = app.add_subcommand("report", "Merge JSON outputs into markdown and a combined JSON summary");
  report->add_option("--input", f.opt.inputs, "JSON artifact (repeatable)")->required();
  report->add_option("--markdown", f.opt.markdown, "Markdown path (default: --out with .md)");
  add_output_flags(report, f, false);

  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  stats->add_option("--dataset", f.opt.dataset, "Dataset (.csv CPWS or .jsonl)")->required();
  stats->add_option("--dataset-id", f.opt.dataset_id, "Dataset identifier (default: file stem)");
  add_output_flags(stats, f, true);

  auto* pwc = app.add_subcommand("build-pwc", "Join CWI sentences with SeCoDa senses into JSON lines");
  pwc->add_option("--cwi", f.opt.inputs, "CWI TSV file (repeatable)")->required();
  pwc->add_option("--secoda", f.opt.secoda, "SeCoDa CSV/TSV with a header row")->required();
  add_output_flags(pwc, f, false);

  auto* spwc = app.add_subcommand("subset-spwc", "One sample per (keyword, sense)");
  spwc->add_option("--dataset", f.opt.dataset, "PWC JSON lines")->required();
  spwc->add_option("--seed", f.opt.seed, "Selection seed")->capture_default_str();
  add_output_flags(spwc, f, false);

  auto* rerun = app.add_subcommand("rerun", "Reproduce an artifact from its embedded manifest");
  rerun->add_option("--manifest", manifest_path, "Any ctxprobe artifact or sidecar manifest")->required();
  rerun->add_option("--out", f.opt.out, "Write here instead of the recorded output path");
  rerun->add_option("--markdown", rerun_md, "Markdown path for report reruns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rerun->parsed()) {
      print(ctxprobe::rerun(manifest_path, f.opt.out, rerun_md));
      return 0;
    }
    f.opt.command = app.get_subcommands().front()->get_name();
    f.opt.policy.pooling = ctxprobe::parse_pooling(f.pooling);
    f.opt.policy.sa_point = ctxprobe::parse_sa_capture(f.sa_capture);
    f.opt.policy.static_kind = ctxprobe::parse_static_kind(f.static_kind);
    f.opt.format = ctxprobe::parse_output_format(f.format);
    f.opt.probe_kind = ctxprobe::parse_probe_kind(f.kind);
    f.opt.probe.standardize = !f.no_standardize;
    print(ctxprobe::run_command(f.opt));
    return 0;
  } catch (const ctxprobe::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
