// Command-line surface for dataset synthesis, ingestion, model fitting,
// evaluation and timing benchmarks.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "uwsysid/eval.hpp"
#include "uwsysid/serialize.hpp"

namespace {

constexpr const char* kToolVersion = "uwsysid 1.0";

// Exit codes: 0 ok, 2 config, 3 data, 4 numeric, 5 I/O.
int exit_code(const std::exception& e) {
  if (dynamic_cast<const uwsysid::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const uwsysid::DataError*>(&e)) return 3;
  if (dynamic_cast<const uwsysid::NumericError*>(&e)) return 4;
  if (dynamic_cast<const uwsysid::IoError*>(&e)) return 5;
  return 1;
}

// Resolved-config provenance lines embedded in every output artifact.
struct Provenance {
  std::vector<std::string> lines;
  Provenance() { lines.push_back(std::string(kToolVersion)); }
  void kv(const std::string& k, const std::string& v) {
    lines.push_back(k + " = " + v);
  }
  void kv(const std::string& k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv(k, os.str());
  }
  void kv(const std::string& k, long long v) { kv(k, std::to_string(v)); }
  void input(const std::string& path) {
    // Record the basename only so reruns in different directories stay
    // byte-identical; the digest pins the content.
    lines.push_back("input " +
                    std::filesystem::path(path).filename().string() + " " +
                    uwsysid::file_digest(path));
  }
  std::string flat() const {
    std::string s;
    for (const auto& l : lines) s += l + "; ";
    return s;
  }
};

uwsysid::FossenParams params_or_placeholder(const std::string& path,
                                            Provenance& prov) {
  if (path.empty()) {
    prov.kv("fossen_params", "placeholder");
    return uwsysid::placeholder_rov_params();
  }
  prov.input(path);
  return uwsysid::load_fossen_params(path);
}

uwsysid::Dataset load_dataset(const std::string& path, int input_dim,
                              double rate, double gap_periods,
                              Provenance& prov) {
  prov.input(path);
  uwsysid::LogSchema schema;
  schema.input_dim = input_dim;
  uwsysid::RawLog log = uwsysid::clean(uwsysid::load_log(path, schema));
  uwsysid::ResampleOptions opts;
  opts.rate_hz = rate;
  opts.gap_periods = gap_periods;
  return uwsysid::resample(log, opts);
}

std::string detect_model_kind(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uwsysid::IoError("cannot open model file: " + path);
  std::string magic, kind;
  in >> magic >> kind;
  if (magic != "uwsysid-model")
    throw uwsysid::ConfigError(path + ": not a model file");
  return kind;
}

std::vector<int> parse_horizons(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw uwsysid::ConfigError("empty horizon list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"System identification toolkit for thruster-actuated "
               "underwater vehicles"};
  app.set_config("--config");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool verbose = false;
  app.add_option("--seed", seed, "Seed for every random operation");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--verbose", verbose);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset")->fallthrough();
  double duration = 60.0, rate = 50.0, noise = 0.0, amplitude = 0.6;
  double fmin = 0.02, fmax = 0.4;
  int harmonics = 6;
  std::string params_path, synth_out = "synth.csv";
  synth->add_option("--duration", duration, "Seconds");
  synth->add_option("--rate", rate, "Hz");
  synth->add_option("--noise", noise, "Measurement noise std");
  synth->add_option("--amplitude", amplitude, "Excitation amplitude");
  synth->add_option("--fmin", fmin, "Excitation band low edge [Hz]");
  synth->add_option("--fmax", fmax, "Excitation band high edge [Hz]");
  synth->add_option("--harmonics", harmonics, "Sinusoids per channel");
  synth->add_option("--params", params_path, "Fossen parameter file");
  synth->add_option("--output", synth_out, "Output CSV name");

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "Clean and resample a raw log")->fallthrough();
  std::string ingest_in, ingest_out = "dataset.csv", report_out = "cleaning.txt";
  int input_dim = 8;
  double gap_periods = 5.0;
  ingest->add_option("input", ingest_in, "Raw log CSV")->required();
  ingest->add_option("--inputs", input_dim, "Number of input channels");
  ingest->add_option("--rate", rate, "Resample rate [Hz]");
  ingest->add_option("--gap-periods", gap_periods,
                     "Segment-splitting gap, in output periods");
  ingest->add_option("--output", ingest_out, "Resampled dataset CSV");
  ingest->add_option("--report", report_out, "Cleaning report file");

  // ---- fit-koopman ----
  auto* fitk = app.add_subcommand("fit-koopman", "EDMDc-RBF identification")->fallthrough();
  std::string fitk_data, fitk_out = "koopman.model";
  int num_centers = 500;
  double gamma = 3.0, lambda = 0.1;
  fitk->add_option("data", fitk_data, "Dataset CSV")->required();
  fitk->add_option("--K", num_centers, "RBF dictionary size");
  fitk->add_option("--gamma", gamma, "RBF width");
  fitk->add_option("--lambda", lambda, "Ridge weight");
  fitk->add_option("--inputs", input_dim, "Number of input channels");
  fitk->add_option("--rate", rate, "Dataset rate [Hz]");
  fitk->add_option("--output", fitk_out, "Model file name");

  // ---- fit-di ----
  auto* fitd = app.add_subcommand("fit-di", "Double-integrator ridge fit")->fallthrough();
  std::string fitd_data, fitd_out = "di.model";
  double di_lambda = 1e-6;
  fitd->add_option("data", fitd_data, "Dataset CSV")->required();
  fitd->add_option("--lambda", di_lambda, "Ridge weight");
  fitd->add_option("--inputs", input_dim, "Number of input channels");
  fitd->add_option("--rate", rate, "Dataset rate [Hz]");
  fitd->add_option("--output", fitd_out, "Model file name");

  // ---- fit-residual ----
  auto* fitr = app.add_subcommand("fit-residual",
                                  "Train the residual velocity corrector")->fallthrough();
  std::string fitr_data, fitr_out = "residual.model", nominal_path;
  uwsysid::TrainConfig tc;
  fitr->add_option("data", fitr_data, "Dataset CSV")->required();
  fitr->add_option("--nominal-params", nominal_path,
                   "Nominal simulator parameter file");
  fitr->add_option("--epochs", tc.epochs);
  fitr->add_option("--batch-size", tc.batch_size);
  fitr->add_option("--lr", tc.learning_rate);
  fitr->add_option("--weight-decay", tc.weight_decay);
  fitr->add_option("--lr-gamma", tc.lr_gamma);
  fitr->add_option("--beta", tc.huber_beta, "Huber threshold");
  bool huber_as_written = false, huber_per_element = false;
  fitr->add_flag("--huber-as-written", huber_as_written,
                 "Use the discontinuous quadratic branch");
  fitr->add_flag("--huber-per-element", huber_per_element,
                 "Apply the Huber loss per element instead of per sample");
  fitr->add_option("--inputs", input_dim, "Number of input channels");
  fitr->add_option("--rate", rate, "Dataset rate [Hz]");
  fitr->add_option("--output", fitr_out, "Model file name");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Endpoint H-step RMSE comparison")->fallthrough();
  std::string ev_data, horizons_str = "1,10,100";
  std::vector<std::string> model_paths;
  std::string fossen_eval_params, ev_nominal_path;
  bool relift = false;
  int trace_start = -1, trace_h = 0;
  std::string report_base = "report";
  ev->add_option("data", ev_data, "Dataset CSV")->required();
  ev->add_option("--model", model_paths, "Model file (repeatable)");
  ev->add_option("--fossen-params", fossen_eval_params,
                 "Also evaluate this physics model");
  ev->add_option("--nominal-params", ev_nominal_path,
                 "Nominal simulator for residual models");
  ev->add_option("--horizons", horizons_str, "Comma-separated horizon list");
  ev->add_flag("--relift", relift, "Koopman ablation: re-lift at every step");
  ev->add_option("--trace-start", trace_start,
                 "Also write an x-y/depth trace from this sample index");
  ev->add_option("--trace-horizon", trace_h, "Trace length in steps");
  ev->add_option("--inputs", input_dim, "Number of input channels");
  ev->add_option("--rate", rate, "Dataset rate [Hz]");
  ev->add_option("--output", report_base, "Report base name");

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "Rollout timing benchmark")->fallthrough();
  std::string bench_data, bench_out = "bench.txt";
  int bench_h = 100, repetitions = 5;
  bench->add_option("data", bench_data, "Dataset CSV")->required();
  bench->add_option("--model", model_paths, "Model file (repeatable)");
  bench->add_option("--horizon", bench_h);
  bench->add_option("--repetitions", repetitions);
  bench->add_option("--nominal-params", ev_nominal_path,
                    "Nominal simulator for residual models");
  bench->add_option("--inputs", input_dim, "Number of input channels");
  bench->add_option("--rate", rate, "Dataset rate [Hz]");
  bench->add_option("--output", bench_out, "Report file name");

  CLI11_PARSE(app, argc, argv);

  auto path_in_out = [&](const std::string& name) {
    return out_dir + "/" + name;
  };

  // Builds eval models from files; keeps ownership alive for the call.
  struct LoadedModels {
    std::vector<std::unique_ptr<uwsysid::RolloutModel>> owned;
    std::vector<const uwsysid::RolloutModel*> ptrs;
  };
  auto load_models = [&](Provenance& prov) {
    LoadedModels lm;
    for (const auto& mp : model_paths) {
      prov.input(mp);
      const std::string kind = detect_model_kind(mp);
      if (kind == "koopman") {
        lm.owned.push_back(std::make_unique<uwsysid::KoopmanRolloutModel>(
            uwsysid::load_koopman(mp), relift));
      } else if (kind == "di") {
        lm.owned.push_back(std::make_unique<uwsysid::DIRolloutModel>(
            uwsysid::load_di(mp)));
      } else if (kind == "residual") {
        Provenance dummy;
        lm.owned.push_back(std::make_unique<uwsysid::ResidualRolloutModel>(
            uwsysid::load_residual(mp),
            params_or_placeholder(ev_nominal_path, dummy)));
      } else {
        throw uwsysid::ConfigError(mp + ": unknown model kind '" + kind + "'");
      }
      lm.ptrs.push_back(lm.owned.back().get());
    }
    return lm;
  };

  try {
    if (synth->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("synth"));
      prov.kv("seed", static_cast<long long>(seed));
      prov.kv("duration", duration);
      prov.kv("rate", rate);
      prov.kv("noise", noise);
      prov.kv("amplitude", amplitude);
      prov.kv("fmin", fmin);
      prov.kv("fmax", fmax);
      prov.kv("harmonics", static_cast<long long>(harmonics));
      uwsysid::FossenParams params = params_or_placeholder(params_path, prov);
      uwsysid::SynthOptions opts;
      opts.duration_s = duration;
      opts.rate_hz = rate;
      opts.noise_std = noise;
      opts.excitation.amplitude = amplitude;
      opts.excitation.f_min_hz = fmin;
      opts.excitation.f_max_hz = fmax;
      opts.excitation.harmonics = harmonics;
      uwsysid::Dataset ds = uwsysid::synth_generate(params, opts, seed);
      uwsysid::write_dataset_csv(ds, path_in_out(synth_out), prov.lines);
      if (verbose)
        std::cerr << "wrote " << ds.total_samples() << " samples\n";
    } else if (ingest->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("ingest"));
      prov.kv("rate", rate);
      prov.kv("gap_periods", gap_periods);
      prov.input(ingest_in);
      uwsysid::LogSchema schema;
      schema.input_dim = input_dim;
      uwsysid::RawLog log = uwsysid::clean(uwsysid::load_log(ingest_in, schema));
      uwsysid::ResampleOptions opts;
      opts.rate_hz = rate;
      opts.gap_periods = gap_periods;
      uwsysid::Dataset ds = uwsysid::resample(log, opts);
      log.report.segments_out = static_cast<int>(ds.segments.size());
      uwsysid::write_dataset_csv(ds, path_in_out(ingest_out), prov.lines);
      std::ofstream rep(path_in_out(report_out));
      if (!rep) throw uwsysid::IoError("cannot write " + report_out);
      rep << log.report.summary();
      if (verbose) std::cerr << log.report.summary();
    } else if (fitk->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("fit-koopman"));
      prov.kv("seed", static_cast<long long>(seed));
      prov.kv("K", static_cast<long long>(num_centers));
      prov.kv("gamma", gamma);
      prov.kv("lambda", lambda);
      uwsysid::Dataset ds =
          load_dataset(fitk_data, input_dim, rate, gap_periods, prov);
      uwsysid::EdmdcOptions opts;
      opts.num_centers = num_centers;
      opts.gamma = gamma;
      opts.lambda = lambda;
      const auto t0 = std::chrono::steady_clock::now();
      uwsysid::KoopmanModel model = uwsysid::edmdc_fit(ds, opts, seed);
      const double fit_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      uwsysid::save_koopman(model, path_in_out(fitk_out), prov.flat());
      if (verbose)
        std::cerr << "fit d=" << model.lifted_dim() << " in " << fit_s
                  << " s\n";
    } else if (fitd->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("fit-di"));
      prov.kv("lambda", di_lambda);
      uwsysid::Dataset ds =
          load_dataset(fitd_data, input_dim, rate, gap_periods, prov);
      uwsysid::DIModel model = uwsysid::di_fit(ds, di_lambda);
      uwsysid::save_di(model, path_in_out(fitd_out), prov.flat());
    } else if (fitr->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("fit-residual"));
      prov.kv("seed", static_cast<long long>(seed));
      prov.kv("epochs", static_cast<long long>(tc.epochs));
      prov.kv("batch_size", static_cast<long long>(tc.batch_size));
      prov.kv("lr", tc.learning_rate);
      prov.kv("weight_decay", tc.weight_decay);
      prov.kv("lr_gamma", tc.lr_gamma);
      prov.kv("huber_beta", tc.huber_beta);
      if (huber_as_written) tc.huber_form = uwsysid::HuberForm::kAsWritten;
      if (huber_per_element)
        tc.huber_reduction = uwsysid::HuberReduction::kPerElement;
      tc.log_epochs = verbose;
      uwsysid::FossenParams nominal =
          params_or_placeholder(nominal_path, prov);
      uwsysid::Dataset ds =
          load_dataset(fitr_data, input_dim, rate, gap_periods, prov);
      uwsysid::ResidualDataset rd = uwsysid::build_residual_dataset(
          ds, [&](const uwsysid::VehicleState& s,
                  const uwsysid::ControlInput& u) {
            return uwsysid::fossen_accel(nominal, s, u);
          });
      uwsysid::ResidualModel model = uwsysid::train_residual(rd, tc, seed);
      uwsysid::save_residual(model, path_in_out(fitr_out), prov.flat());
    } else if (ev->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("eval"));
      prov.kv("horizons", horizons_str);
      uwsysid::Dataset ds =
          load_dataset(ev_data, input_dim, rate, gap_periods, prov);
      LoadedModels lm = load_models(prov);
      if (!fossen_eval_params.empty()) {
        lm.owned.push_back(std::make_unique<uwsysid::FossenRolloutModel>(
            params_or_placeholder(fossen_eval_params, prov), ds.dt));
        lm.ptrs.push_back(lm.owned.back().get());
      }
      if (lm.ptrs.empty())
        throw uwsysid::ConfigError("eval: no models given");
      auto records =
          uwsysid::compare_models(lm.ptrs, ds, parse_horizons(horizons_str));
      const std::string text = uwsysid::render_report_text(records);
      std::cout << text;
      std::ofstream rep(path_in_out(report_base + ".txt"));
      if (!rep) throw uwsysid::IoError("cannot write report");
      for (const auto& l : prov.lines) rep << "# " << l << "\n";
      rep << text;
      uwsysid::write_report_csv(records, path_in_out(report_base + ".csv"),
                                prov.lines);
      if (trace_start >= 0 && trace_h > 0)
        uwsysid::write_rollout_trace(lm.ptrs, ds, trace_start, trace_h,
                                     path_in_out(report_base + "_trace.csv"));
    } else if (bench->parsed()) {
      Provenance prov;
      prov.kv("command", std::string("bench"));
      prov.kv("horizon", static_cast<long long>(bench_h));
      prov.kv("repetitions", static_cast<long long>(repetitions));
      uwsysid::Dataset ds =
          load_dataset(bench_data, input_dim, rate, gap_periods, prov);
      LoadedModels lm = load_models(prov);
      uwsysid::IdentityModel identity;
      lm.ptrs.insert(lm.ptrs.begin(), &identity);
      std::ofstream rep(path_in_out(bench_out));
      if (!rep) throw uwsysid::IoError("cannot write " + bench_out);
      for (const auto& l : prov.lines) rep << "# " << l << "\n";
      rep << "model,median_rollout_s,spread_s,per_step_s\n";
      for (const auto* m : lm.ptrs) {
        uwsysid::TimingResult t =
            uwsysid::bench_timing(*m, ds, bench_h, repetitions);
        rep << m->name() << "," << t.median_s << "," << t.spread_s << ","
            << t.per_step_s << "\n";
        if (verbose)
          std::cerr << m->name() << ": " << t.median_s << " s/rollout\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 0;
}
