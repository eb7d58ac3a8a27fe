// gdc: fit, apply and audit per-class Gaussian classifiers over embedding archives.
//
// Exit codes: 0 success, 2 input error, 3 numerical failure, 4 shape mismatch.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdc/archive.hpp"
#include "gdc/commands.hpp"
#include "gdc/error.hpp"
#include "gdc/gmm.hpp"
#include "gdc/model_io.hpp"
#include "gdc/normality.hpp"

namespace {

struct ManifestArgs {
  std::string labels, templates, out;
  std::uint32_t per_template = 30;
  std::uint64_t seed = 0;
};

int run_manifest(const ManifestArgs& a) {
  const auto labels = gdc::read_lines(a.labels);
  const auto templates = a.templates.empty() ? gdc::default_templates() : gdc::read_lines(a.templates);
  const auto manifest = gdc::expand_manifest(labels, templates, a.per_template, a.seed);
  std::ofstream out(a.out);
  if (!out) throw gdc::Error(gdc::ErrorKind::Io, "cannot open '" + a.out + "' for writing");
  gdc::write_manifest(manifest, out);
  std::cout << "records " << manifest.entries.size() << "\n"
            << "classes " << labels.size() << "\n"
            << "images " << manifest.total_images() << "\n";
  return 0;
}

struct FitArgs {
  std::string embeddings, out;
  double eps = gdc::kDefaultEps;
};

int run_fit(const FitArgs& a) {
  const auto refs = gdc::read_embeddings(a.embeddings);
  gdc::GdcModel model = [&] {
    try {
      return gdc::fit_model(refs, a.eps);
    } catch (const gdc::Error& e) {
      if (e.kind() == gdc::ErrorKind::NotPositiveDefinite)
        gdc::rethrow_with_context(e, "covariance not positive definite at eps=" + std::to_string(a.eps) +
                                         " (try a larger --eps)");
      throw;
    }
  }();
  gdc::write_model(model, a.out);
  std::cout << "k " << model.size() << "\n"
            << "d " << model.dim() << "\n"
            << "eps " << a.eps << "\n";
  for (const auto& c : model.components()) std::cout << "class " << c.label() << " n " << c.n_ref() << "\n";
  return 0;
}

struct ClassifyArgs {
  std::string model, embeddings, out;
  std::size_t top_k = gdc::kDefaultTopK;
};

int run_classify(const ClassifyArgs& a) {
  const auto model = gdc::read_model(a.model);
  const auto archive = gdc::read_embeddings(a.embeddings);
  std::ofstream out(a.out);
  if (!out) throw gdc::Error(gdc::ErrorKind::Io, "cannot open '" + a.out + "' for writing");
  std::size_t total = 0, correct = 0;
  gdc::classify_archive(model, archive, a.top_k, [&](const gdc::PredictionRecord& r) {
    out << gdc::to_json(r).dump() << '\n';
    ++total;
    if (r.predicted == r.true_label) ++correct;
  });
  std::cout << "rows " << total << "\n"
            << "k " << model.size() << "\n"
            << "top_k " << std::min(a.top_k, model.size()) << "\n"
            << "top1 " << (total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0) << "\n";
  return 0;
}

int run_eval(const std::string& predictions) {
  std::ifstream in(predictions);
  if (!in) throw gdc::Error(gdc::ErrorKind::Io, "cannot open '" + predictions + "'");
  gdc::render(gdc::evaluate(gdc::read_predictions(in)), std::cout);
  return 0;
}

struct AuditArgs {
  std::string embeddings;
  std::size_t components = gdc::kDefaultAuditComponents;
  double alpha = gdc::kDefaultAlpha;
};

int run_audit(const AuditArgs& a) {
  gdc::render(gdc::audit(gdc::read_embeddings(a.embeddings), a.components, a.alpha), std::cout);
  return 0;
}

struct AblateArgs {
  std::string embeddings, held_out;
  std::vector<double> eps_values;
  std::vector<std::size_t> n_values;
  std::uint64_t seed = 0;
  double eps = gdc::kDefaultEps;
};

int run_ablate_eps(const AblateArgs& a) {
  const auto rows =
      gdc::ablate_eps(gdc::read_embeddings(a.embeddings), gdc::read_embeddings(a.held_out), a.eps_values);
  gdc::render_ablation(rows, false, std::cout);
  return 0;
}

int run_ablate_n(const AblateArgs& a) {
  const auto rows =
      gdc::ablate_n(gdc::read_embeddings(a.embeddings), gdc::read_embeddings(a.held_out), a.n_values, a.seed, a.eps);
  gdc::render_ablation(rows, true, std::cout);
  return 0;
}

struct BenchArgs {
  std::string model, embeddings;
  std::size_t repetitions = 10;
  std::size_t batch_size = 1;
  std::size_t synthetic_k = 0, synthetic_d = 0, synthetic_rows = 8;
  std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
  if (a.repetitions == 0) throw gdc::Error(gdc::ErrorKind::InvalidArgument, "--repetitions must be >= 1");
  if (a.synthetic_k > 0 || a.synthetic_d > 0) {
    if (a.synthetic_k == 0 || a.synthetic_d == 0)
      throw gdc::Error(gdc::ErrorKind::InvalidArgument, "--synthetic-k and --synthetic-d go together");
    const auto model = gdc::synthetic_model(a.synthetic_k, a.synthetic_d, a.seed);
    gdc::Rng rng(a.seed + 1);
    std::normal_distribution<double> normal;
    gdc::FloatBlock rows(a.synthetic_rows, a.synthetic_d);
    for (float& v : rows.data()) v = static_cast<float>(normal(rng.engine()));
    gdc::render(gdc::bench(model, rows, a.repetitions, a.batch_size), std::cout);
    return 0;
  }
  if (a.model.empty() || a.embeddings.empty())
    throw gdc::Error(gdc::ErrorKind::InvalidArgument, "need --model and --embeddings, or --synthetic-k/--synthetic-d");
  const auto model = gdc::read_model(a.model);
  const auto archive = gdc::read_embeddings(a.embeddings);
  gdc::FloatBlock rows(0, archive.dim());
  for (const auto& c : archive.classes())
    for (std::size_t r = 0; r < c.block.rows(); ++r) rows.append_row(c.block.row(r));
  gdc::render(gdc::bench(model, rows, a.repetitions, a.batch_size), std::cout);
  return 0;
}

struct InjectArgs {
  std::string references, real, out;
  std::size_t per_class = 1;
  std::uint64_t seed = 0;
};

int run_inject(const InjectArgs& a) {
  const auto merged =
      gdc::inject_real(gdc::read_embeddings(a.references), gdc::read_embeddings(a.real), a.per_class, a.seed);
  gdc::write_embeddings(merged, a.out);
  std::cout << "classes " << merged.size() << "\n"
            << "replaced_per_class " << a.per_class << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian classifier over image embeddings"};
  app.require_subcommand(1);

  ManifestArgs manifest;
  auto* cmd_manifest = app.add_subcommand("manifest", "Expand class labels and prompt templates into a generation manifest");
  cmd_manifest->add_option("--labels", manifest.labels, "File with one class label per line")->required();
  cmd_manifest->add_option("--templates", manifest.templates, "File with one '{}' template per line (default: built-in set)");
  cmd_manifest->add_option("--per-template", manifest.per_template, "Images per template")->check(CLI::PositiveNumber);
  cmd_manifest->add_option("--seed", manifest.seed, "Base seed");
  cmd_manifest->add_option("--out", manifest.out, "Manifest output path")->required();

  FitArgs fit;
  auto* cmd_fit = app.add_subcommand("fit", "Fit one regularized Gaussian per class");
  cmd_fit->add_option("--embeddings", fit.embeddings, "Reference embedding archive (GDCE)")->required();
  cmd_fit->add_option("--eps", fit.eps, "Covariance regularization added to the diagonal");
  cmd_fit->add_option("--out", fit.out, "Model output path (GDCM)")->required();

  ClassifyArgs classify;
  auto* cmd_classify = app.add_subcommand("classify", "Write one prediction record per embedding");
  cmd_classify->add_option("--model", classify.model, "Model file")->required();
  cmd_classify->add_option("--embeddings", classify.embeddings, "Embeddings to classify")->required();
  cmd_classify->add_option("--top-k", classify.top_k, "Ranked classes per record")->check(CLI::PositiveNumber);
  cmd_classify->add_option("--out", classify.out, "Prediction records output (JSON lines)")->required();

  std::string predictions;
  auto* cmd_eval = app.add_subcommand("eval", "Accuracy report from prediction records");
  cmd_eval->add_option("--predictions", predictions, "Prediction records file")->required();

  AuditArgs audit;
  auto* cmd_audit = app.add_subcommand("audit", "Per-class PCA + Shapiro-Wilk normality audit");
  cmd_audit->add_option("--embeddings", audit.embeddings, "Embedding archive")->required();
  cmd_audit->add_option("--components", audit.components, "Principal components tested per class")->check(CLI::PositiveNumber);
  cmd_audit->add_option("--alpha", audit.alpha, "Significance level");

  AblateArgs ablate;
  auto* cmd_ablate_eps = app.add_subcommand("ablate-eps", "Held-out accuracy across regularization values");
  cmd_ablate_eps->add_option("--embeddings", ablate.embeddings, "Reference embedding archive")->required();
  cmd_ablate_eps->add_option("--held-out", ablate.held_out, "Held-out evaluation archive")->required();
  cmd_ablate_eps->add_option("--eps", ablate.eps_values, "Regularization values")->required()->delimiter(',');

  auto* cmd_ablate_n = app.add_subcommand("ablate-n", "Held-out accuracy across reference counts per class");
  cmd_ablate_n->add_option("--embeddings", ablate.embeddings, "Reference embedding archive")->required();
  cmd_ablate_n->add_option("--held-out", ablate.held_out, "Held-out evaluation archive")->required();
  cmd_ablate_n->add_option("--n", ablate.n_values, "Reference counts")->required()->delimiter(',');
  cmd_ablate_n->add_option("--seed", ablate.seed, "Subsampling seed");
  cmd_ablate_n->add_option("--eps", ablate.eps, "Covariance regularization");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "Per-embedding scoring latency (encoder excluded)");
  cmd_bench->add_option("--model", bench.model, "Model file");
  cmd_bench->add_option("--embeddings", bench.embeddings, "Embeddings to score");
  cmd_bench->add_option("--repetitions", bench.repetitions, "Passes over the embeddings");
  cmd_bench->add_option("--batch-size", bench.batch_size, "Rows scored per call")->check(CLI::PositiveNumber);
  cmd_bench->add_option("--synthetic-k", bench.synthetic_k, "Benchmark a random model with this many classes");
  cmd_bench->add_option("--synthetic-d", bench.synthetic_d, "Dimension of the random model");
  cmd_bench->add_option("--synthetic-rows", bench.synthetic_rows, "Random embeddings scored per repetition");
  cmd_bench->add_option("--seed", bench.seed, "Seed for the random model");

  InjectArgs inject;
  auto* cmd_inject = app.add_subcommand("inject", "Replace reference rows with real embeddings (one-shot setting)");
  cmd_inject->add_option("--references", inject.references, "Reference archive")->required();
  cmd_inject->add_option("--real", inject.real, "Archive of real embeddings")->required();
  cmd_inject->add_option("--per-class", inject.per_class, "Rows replaced per class");
  cmd_inject->add_option("--seed", inject.seed, "Selection seed");
  cmd_inject->add_option("--out", inject.out, "Output archive")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*cmd_manifest) return run_manifest(manifest);
    if (*cmd_fit) return run_fit(fit);
    if (*cmd_classify) return run_classify(classify);
    if (*cmd_eval) return run_eval(predictions);
    if (*cmd_audit) return run_audit(audit);
    if (*cmd_ablate_eps) return run_ablate_eps(ablate);
    if (*cmd_ablate_n) return run_ablate_n(ablate);
    if (*cmd_bench) return run_bench(bench);
    if (*cmd_inject) return run_inject(inject);
  } catch (const gdc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gdc::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
