/*
 * Copyright 2026 The ppgrisk Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ppgrisk/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ppgrisk/errors.h"
#include "ppgrisk/pca.h"
#include "ppgrisk/rng.h"
#include "ppgrisk/survival.h"
#include "text.h"

namespace ppgrisk {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kBootstrapStream = 0x626f6f74;  // "boot"
constexpr std::uint64_t kPermuteStream = 0x7065726d;    // "perm"
constexpr std::uint64_t kWaldStream = 0x77616c64;       // "wald"
constexpr std::uint64_t kSubgroupStream = 0x73756267;   // "subg"

// ---------------------------------------------------------------------------
// Config parsing

template <typename T>
T Get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: \"" + where + key + "\" has the wrong type");
  }
}

void CheckKeys(const json& j, std::initializer_list<const char*> allowed,
               const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: \"" + where + "\" must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok |= it.key() == a;
    if (!ok) throw ValidationError("config: unknown key \"" + where + it.key() + "\"");
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

void ParseSynthetic(const json& j, SyntheticSpec& s) {
  const std::string w = "synthetic.";
  CheckKeys(j, {"n_subjects", "true_coefficients", "baseline_rate", "censor_horizon",
                "censor_rate", "seed", "waveform_length", "waveform_noise", "sites"},
            w);
  if (j.contains("n_subjects")) s.n_subjects = Get<std::size_t>(j, "n_subjects", w);
  if (j.contains("true_coefficients")) {
    s.true_coefficients = Get<std::map<std::string, double>>(j, "true_coefficients", w);
  }
  if (j.contains("baseline_rate")) s.baseline_rate = Get<double>(j, "baseline_rate", w);
  if (j.contains("censor_horizon")) s.censor_horizon = Get<double>(j, "censor_horizon", w);
  if (j.contains("censor_rate")) s.censor_rate = Get<double>(j, "censor_rate", w);
  if (j.contains("seed")) s.seed = Get<std::uint64_t>(j, "seed", w);
  if (j.contains("waveform_length")) s.waveform_length = Get<std::size_t>(j, "waveform_length", w);
  if (j.contains("waveform_noise")) s.waveform_noise = Get<double>(j, "waveform_noise", w);
  if (j.contains("sites")) s.sites = Get<std::vector<std::string>>(j, "sites", w);
}

void ParseEncoder(const json& j, EncoderConfig& e) {
  const std::string w = "encoder.";
  CheckKeys(j, {"input_length", "blocks", "channels", "embedding_dim", "epochs",
                "batch_size", "learning_rate", "weight_decay", "dropout", "optimizer",
                "augment", "seed", "calibration_samples"},
            w);
  if (j.contains("input_length")) e.input_length = Get<std::size_t>(j, "input_length", w);
  if (j.contains("channels")) {
    e.channels = Get<std::vector<std::size_t>>(j, "channels", w);
    e.blocks = e.channels.size();
    if (!e.channels.empty()) e.embedding_dim = e.channels.back();
  }
  if (j.contains("blocks")) e.blocks = Get<std::size_t>(j, "blocks", w);
  if (j.contains("embedding_dim")) e.embedding_dim = Get<std::size_t>(j, "embedding_dim", w);
  if (j.contains("epochs")) e.epochs = Get<std::size_t>(j, "epochs", w);
  if (j.contains("batch_size")) e.batch_size = Get<std::size_t>(j, "batch_size", w);
  if (j.contains("learning_rate")) e.learning_rate = Get<double>(j, "learning_rate", w);
  if (j.contains("weight_decay")) e.weight_decay = Get<double>(j, "weight_decay", w);
  if (j.contains("dropout")) e.dropout = Get<double>(j, "dropout", w);
  if (j.contains("seed")) e.seed = Get<std::uint64_t>(j, "seed", w);
  if (j.contains("calibration_samples")) {
    e.calibration_samples = Get<std::size_t>(j, "calibration_samples", w);
  }
  if (j.contains("optimizer")) {
    const auto o = Get<std::string>(j, "optimizer", w);
    if (o == "adamw") {
      e.optimizer = OptimizerKind::kAdamW;
    } else if (o == "sgd") {
      e.optimizer = OptimizerKind::kSgd;
    } else {
      throw ValidationError("config: encoder.optimizer must be \"adamw\" or \"sgd\"");
    }
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    CheckKeys(a, {"magnitude", "apply_probability"}, "encoder.augment.");
    if (a.contains("magnitude")) e.augment.magnitude = Get<double>(a, "magnitude", "encoder.augment.");
    if (a.contains("apply_probability")) {
      e.augment.apply_probability = Get<double>(a, "apply_probability", "encoder.augment.");
    }
  }
}

// ---------------------------------------------------------------------------
// Data access

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SplitRows LoadSplits(const RunConfig& config) {
  const fs::path path = config.CohortPath();
  if (!fs::exists(path)) {
    throw DependencyError("cohort file " + path.string() + " not found: run simulate first");
  }
  const auto rows = LoadCohort(path, config.schema);
  const auto included = ApplyInclusion(rows);
  return SplitBySite(included.kept, config.split);
}

std::string WaveformId(const CohortRow& row) { return row.ppg_ref.value_or(row.subject_id); }

// Per-subject signal-derived inputs for one partition.
struct SignalInputs {
  std::vector<std::optional<std::vector<double>>> canonical;
  std::vector<std::optional<MorphologyFeatures>> morphology;
  std::vector<std::optional<std::array<double, kDlsFeatureCount>>> dls;
};

SignalInputs PrepareSignals(const std::vector<CohortRow>& rows, const WaveformStore& store,
                            std::size_t length, const MorphologyOptions& morph_opts) {
  SignalInputs s;
  s.canonical.resize(rows.size());
  s.morphology.resize(rows.size());
  s.dls.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::vector<double>* raw = store.Find(WaveformId(rows[i]));
    if (raw == nullptr || raw->size() < 2) continue;
    const Waveform native = Preprocess(*raw);
    s.canonical[i] = Preprocess(ResampleLinear(native.samples, length)).samples;
    try {
      s.morphology[i] = ExtractMorphology(native, rows[i].height.value_or(0.0), morph_opts);
      if (!rows[i].height) s.morphology[i]->stiffness_index.reset();
    } catch (const ValidationError&) {
    }
  }
  return s;
}

void AddDls(SignalInputs& s, const EncoderParams& params, const PcaModel& pca) {
  std::vector<std::size_t> idx;
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < s.canonical.size(); ++i) {
    if (s.canonical[i]) {
      idx.push_back(i);
      x.push_back(*s.canonical[i]);
    }
  }
  const auto emb = Embed(params, x);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Eigen::VectorXd z = Project(pca, emb[k]);
    std::array<double, kDlsFeatureCount> a{};
    for (std::size_t j = 0; j < kDlsFeatureCount && j < static_cast<std::size_t>(z.size()); ++j) {
      a[j] = z(static_cast<Eigen::Index>(j));
    }
    s.dls[idx[k]] = a;
  }
}

struct Artifacts {
  std::optional<WaveformStore> store;
  std::optional<EncoderParams> encoder;
  std::optional<PcaModel> pca;
};

// Loads what the listed models need; missing files are dependency errors.
Artifacts LoadArtifacts(const RunConfig& config, const std::vector<std::string>& models) {
  bool need_wave = false, need_dls = false;
  for (const auto& m : models) {
    const ModelSpec spec = ModelSpec::Named(m);
    need_wave |= spec.UsesDls() || spec.UsesMorphology();
    need_dls |= spec.UsesDls();
  }
  Artifacts a;
  if (need_wave) {
    const fs::path wp = config.WaveformPath();
    if (!fs::exists(wp)) {
      throw DependencyError("waveform store " + wp.string() +
                            " not found; PPG models need it (run simulate first)");
    }
    a.store = LoadWaveformStore(wp);
  }
  if (need_dls) {
    const fs::path weights = config.out_dir / "encoder.weights";
    const fs::path pca = config.out_dir / "pca.csv";
    if (!fs::exists(weights) || !fs::exists(pca)) {
      throw DependencyError("DLS models need encoder weights (" + weights.string() +
                            "): run train first");
    }
    std::ifstream win(weights, std::ios::binary);
    a.encoder = ReadEncoderParams(win);
    std::ifstream pin(pca);
    a.pca = ReadPcaCsv(pin);
  }
  return a;
}

SignalInputs SignalsFor(const std::vector<CohortRow>& rows, const Artifacts& a,
                        const RunConfig& config) {
  if (!a.store) {
    SignalInputs s;
    s.canonical.resize(rows.size());
    s.morphology.resize(rows.size());
    s.dls.resize(rows.size());
    return s;
  }
  const std::size_t length = a.encoder ? a.encoder->input_length : config.encoder.input_length;
  SignalInputs s = PrepareSignals(rows, *a.store, length, config.morphology);
  if (a.encoder) AddDls(s, *a.encoder, *a.pca);
  return s;
}

std::optional<std::vector<double>> Features(const ModelSpec& spec, const CohortRow& row,
                                            const SignalInputs& s, std::size_t i) {
  FeatureSources src;
  if (s.morphology[i]) src.morphology = &*s.morphology[i];
  if (s.dls[i]) src.dls = &*s.dls[i];
  try {
    return BuildFeatures(spec, row, src).values;
  } catch (const MissingCovariateError&) {
    return std::nullopt;
  }
}

struct CaseSet {
  Eigen::MatrixXd raw;
  std::vector<double> times;
  std::vector<std::uint8_t> events;
};

CaseSet CompleteCases(const ModelSpec& spec, const std::vector<CohortRow>& rows,
                      const SignalInputs& s) {
  std::vector<std::vector<double>> feats;
  CaseSet c;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto f = Features(spec, rows[i], s, i);
    if (!f) continue;
    feats.push_back(std::move(*f));
    c.times.push_back(rows[i].followup_years());
    c.events.push_back(rows[i].event ? 1 : 0);
  }
  c.raw.resize(static_cast<Eigen::Index>(feats.size()),
               static_cast<Eigen::Index>(spec.covariates.size()));
  for (std::size_t r = 0; r < feats.size(); ++r) {
    for (std::size_t k = 0; k < feats[r].size(); ++k) {
      c.raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = feats[r][k];
    }
  }
  return c;
}

fs::path FitPath(const RunConfig& config, const std::string& model) {
  return config.out_dir / "fits" / (model + ".cox");
}

std::string Serialize(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

std::size_t ModelIndex(const std::string& name) {
  const auto& names = ModelNames();
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

ojson Num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

ojson Interval(double lo, double hi) { return ojson::array({Num(lo), Num(hi)}); }

}  // namespace

// ---------------------------------------------------------------------------

fs::path RunConfig::CohortPath() const {
  return cohort_csv.empty() ? out_dir / "cohort.csv" : cohort_csv;
}

fs::path RunConfig::WaveformPath() const {
  return waveform_store.empty() ? out_dir / "waveforms.csv" : waveform_store;
}

const std::vector<std::string>& RunConfig::ModelList() const {
  return models.empty() ? ModelNames() : models;
}

void RunConfig::Validate() const {
  for (const auto& m : ModelList()) ModelSpec::Named(m);
  const auto& list = ModelList();
  if (std::find(list.begin(), list.end(), reference) == list.end()) {
    throw ValidationError("reference model \"" + reference + "\" is not in the model list");
  }
  if (reference == "sbp140") throw ValidationError("the reference model needs a Cox fit");
  if (!(margin >= 0.0)) throw ValidationError("margin must be >= 0");
  if (ridge_grid.empty()) throw ValidationError("ridge grid is empty");
  for (double l : ridge_grid) {
    if (!(l >= 0.0)) throw ValidationError("ridge grid values must be >= 0");
  }
  if (!(horizon_years > 0.0)) throw ValidationError("horizon must be positive");
  if (n_bootstrap == 0 || n_permutations == 0) {
    throw ValidationError("bootstrap and permutation counts must be positive");
  }
  if (calibration_bins < 2) throw ValidationError("calibration needs at least 2 bins");
  encoder.Validate();
}

RunConfig ParseRunConfig(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  CheckKeys(j, {"out_dir", "cohort_csv", "waveform_store", "csv_columns", "synthetic",
                "split", "encoder", "morphology_smoothing", "ridge_grid", "models",
                "reference", "margin", "horizon_years", "seed", "n_bootstrap",
                "n_permutations", "subgroup_permutations", "calibration_bins",
                "quintile_cutoff", "calibration_observed", "subgroups"},
            "");
  RunConfig c;
  bool synth_seed = false, enc_seed = false;
  if (j.contains("seed")) c.seed = Get<std::uint64_t>(j, "seed", "");
  if (j.contains("out_dir")) c.out_dir = Resolve(base_dir, Get<std::string>(j, "out_dir", ""));
  if (j.contains("cohort_csv")) c.cohort_csv = Resolve(base_dir, Get<std::string>(j, "cohort_csv", ""));
  if (j.contains("waveform_store")) {
    c.waveform_store = Resolve(base_dir, Get<std::string>(j, "waveform_store", ""));
  }
  if (j.contains("csv_columns")) {
    c.schema.columns = Get<std::map<std::string, std::string>>(j, "csv_columns", "");
  }
  if (j.contains("synthetic")) {
    ParseSynthetic(j.at("synthetic"), c.synthetic);
    synth_seed = j.at("synthetic").contains("seed");
  }
  if (j.contains("split")) {
    c.split.clear();
    for (const auto& [site, name] :
         Get<std::map<std::string, std::string>>(j, "split", "")) {
      c.split[site] = ParseSplit(name);
    }
  }
  if (j.contains("encoder")) {
    ParseEncoder(j.at("encoder"), c.encoder);
    enc_seed = j.at("encoder").contains("seed");
  }
  if (j.contains("morphology_smoothing")) {
    c.morphology.smoothing_window = Get<std::size_t>(j, "morphology_smoothing", "");
  }
  if (j.contains("ridge_grid")) c.ridge_grid = Get<std::vector<double>>(j, "ridge_grid", "");
  if (j.contains("models")) c.models = Get<std::vector<std::string>>(j, "models", "");
  if (j.contains("reference")) c.reference = Get<std::string>(j, "reference", "");
  if (j.contains("margin")) c.margin = Get<double>(j, "margin", "");
  if (j.contains("horizon_years")) c.horizon_years = Get<double>(j, "horizon_years", "");
  if (j.contains("n_bootstrap")) c.n_bootstrap = Get<std::size_t>(j, "n_bootstrap", "");
  if (j.contains("n_permutations")) {
    c.n_permutations = Get<std::size_t>(j, "n_permutations", "");
    c.subgroup_permutations = c.n_permutations;
  }
  if (j.contains("subgroup_permutations")) {
    c.subgroup_permutations = Get<std::size_t>(j, "subgroup_permutations", "");
  }
  if (j.contains("calibration_bins")) c.calibration_bins = Get<std::size_t>(j, "calibration_bins", "");
  if (j.contains("quintile_cutoff")) c.quintile_cutoff = Get<std::size_t>(j, "quintile_cutoff", "");
  if (j.contains("calibration_observed")) {
    const auto m = Get<std::string>(j, "calibration_observed", "");
    if (m == "kaplan_meier") {
      c.calibration_mode = ObservedRate::kKaplanMeier;
    } else if (m == "raw_proportion") {
      c.calibration_mode = ObservedRate::kRawProportion;
    } else {
      throw ValidationError(
          "config: calibration_observed must be \"kaplan_meier\" or \"raw_proportion\"");
    }
  }
  if (j.contains("subgroups")) c.subgroups = Get<bool>(j, "subgroups", "");
  if (!synth_seed) c.synthetic.seed = c.seed;
  if (!enc_seed) c.encoder.seed = c.seed;
  c.Validate();
  return c;
}

RunConfig LoadRunConfig(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file " + path.string() + " not found");
  return ParseRunConfig(ReadFile(path), path.parent_path());
}

void ApplyOverrides(RunConfig& config, const CliOverrides& o) {
  if (o.seed) {
    config.seed = *o.seed;
    config.synthetic.seed = *o.seed;
    config.encoder.seed = *o.seed;
  }
  if (o.out) config.out_dir = *o.out;
  if (o.models) config.models = *o.models;
  if (o.margin) config.margin = *o.margin;
  config.Validate();
}

void WriteFileAtomic(const fs::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw ValidationError("cannot create directory " + path.parent_path().string() + ": " +
                            ec.message());
    }
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string() + ": output not writable");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw ValidationError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw ValidationError("cannot move " + tmp.string() + " into place: " + ec.message());
}

// ---------------------------------------------------------------------------

void CmdSimulate(const RunConfig& config) {
  const SyntheticCohort cohort = GenerateSynthetic(config.synthetic);
  std::vector<std::string> order;
  for (const auto& r : cohort.rows) order.push_back(WaveformId(r));
  WriteFileAtomic(config.CohortPath(),
                  Serialize([&](std::ostream& o) { WriteCohort(o, cohort.rows); }));
  WriteFileAtomic(config.WaveformPath(), Serialize([&](std::ostream& o) {
                    WriteWaveformStore(o, cohort.waveforms, order);
                  }));
  ojson truth;
  truth["seed"] = config.synthetic.seed;
  truth["n_subjects"] = config.synthetic.n_subjects;
  truth["baseline_rate"] = cohort.baseline_rate;
  truth["censor_rate"] = config.synthetic.censor_rate;
  truth["censor_horizon"] = config.synthetic.censor_horizon;
  ojson coef = ojson::object();
  for (const auto& [k, v] : cohort.truth) coef[k] = v;
  truth["coefficients"] = coef;
  WriteFileAtomic(config.out_dir / "truth.json", truth.dump(2) + "\n");
}

void CmdTrain(const RunConfig& config) {
  const SplitRows splits = LoadSplits(config);
  if (splits.train.empty()) throw ValidationError("train split is empty");
  if (splits.tune.empty()) throw ValidationError("tune split is empty");
  const fs::path wp = config.WaveformPath();
  if (!fs::exists(wp)) {
    throw DependencyError("waveform store " + wp.string() + " not found: run simulate first");
  }
  const WaveformStore store = LoadWaveformStore(wp);
  const std::size_t L = config.encoder.input_length;
  const SignalInputs tr = PrepareSignals(splits.train, store, L, config.morphology);
  const SignalInputs tu = PrepareSignals(splits.tune, store, L, config.morphology);

  double age_sum = 0.0, age_sq = 0.0, age_n = 0.0;
  for (const auto& r : splits.train) {
    if (r.age) {
      age_sum += *r.age;
      age_sq += *r.age * *r.age;
      age_n += 1.0;
    }
  }
  const double age_mean = age_n > 0 ? age_sum / age_n : 0.0;
  const double age_sd =
      age_n > 1 ? std::sqrt(std::max(0.0, (age_sq - age_n * age_mean * age_mean) / (age_n - 1)))
                : 0.0;

  EncoderTrainSet train;
  for (std::size_t i = 0; i < splits.train.size(); ++i) {
    if (!tr.canonical[i]) continue;
    std::optional<bool> notch;
    if (tr.morphology[i]) notch = !tr.morphology[i]->notch_absent;
    ProxyTargets t = MakeProxyTargets(splits.train[i], age_mean, age_sd, notch);
    if (!t.any()) continue;
    train.waveforms.push_back(*tr.canonical[i]);
    train.targets.push_back(t);
  }
  EncoderTuneSet tune;
  for (std::size_t i = 0; i < splits.tune.size(); ++i) {
    if (!tu.canonical[i]) continue;
    tune.waveforms.push_back(*tu.canonical[i]);
    tune.times.push_back(splits.tune[i].followup_years());
    tune.events.push_back(splits.tune[i].event ? 1 : 0);
  }
  if (train.waveforms.empty()) throw ValidationError("no train subject has a waveform");
  if (tune.waveforms.empty()) throw ValidationError("no tune subject has a waveform");

  const TrainResult result = TrainEncoder(config.encoder, train, tune);
  const PcaModel pca = FitPca(Embed(result.params, train.waveforms), kDlsFeatureCount);

  WriteFileAtomic(config.out_dir / "encoder.weights",
                  Serialize([&](std::ostream& o) { WriteEncoderParams(o, result.params); }));
  WriteFileAtomic(config.out_dir / "pca.csv",
                  Serialize([&](std::ostream& o) { WritePcaCsv(o, pca); }));
  WriteFileAtomic(config.out_dir / "train_log.csv",
                  Serialize([&](std::ostream& o) { WriteTrainingLog(o, result.log); }));
}

void CmdFit(const RunConfig& config) {
  std::vector<std::string> fitted;
  for (const auto& m : config.ModelList()) {
    if (!ModelSpec::Named(m).IsThresholdRule()) fitted.push_back(m);
  }
  const Artifacts art = LoadArtifacts(config, fitted);
  const SplitRows splits = LoadSplits(config);
  if (splits.train.empty()) throw ValidationError("train split is empty");
  if (splits.tune.empty()) throw ValidationError("tune split is empty");
  const SignalInputs tr = SignalsFor(splits.train, art, config);
  const SignalInputs tu = SignalsFor(splits.tune, art, config);

  std::ostringstream selection;
  selection << "model,lambda,tune_loglik,selected,n_train,n_tune\n";
  for (const auto& name : fitted) {
    const ModelSpec spec = ModelSpec::Named(name);
    const CaseSet train = CompleteCases(spec, splits.train, tr);
    const CaseSet tune = CompleteCases(spec, splits.tune, tu);
    if (train.times.empty()) throw ValidationError("model " + name + ": no complete train cases");
    if (tune.times.empty()) throw ValidationError("model " + name + ": no complete tune cases");
    std::optional<CoxFit> best;
    double best_ll = -std::numeric_limits<double>::infinity();
    std::vector<double> lls;
    for (double lambda : config.ridge_grid) {
      CoxFit fit = FitCox(spec, train.raw, train.times, train.events, lambda);
      const double ll = HeldOutLogLikelihood(fit, tune.raw, tune.times, tune.events);
      lls.push_back(ll);
      if (!best || ll > best_ll) {
        best_ll = ll;
        best = std::move(fit);
      }
    }
    for (std::size_t k = 0; k < config.ridge_grid.size(); ++k) {
      selection << name << ',' << internal::FormatDouble(config.ridge_grid[k]) << ','
                << internal::FormatDouble(lls[k]) << ','
                << (config.ridge_grid[k] == best->ridge_lambda ? 1 : 0) << ','
                << train.times.size() << ',' << tune.times.size() << '\n';
    }
    WriteFileAtomic(FitPath(config, name),
                    Serialize([&](std::ostream& o) { WriteCoxFit(o, *best); }));
  }
  WriteFileAtomic(config.out_dir / "fits" / "ridge_selection.csv", selection.str());
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct PairedData {
  std::vector<std::size_t> rows;  // into the test partition
  std::vector<double> score, ref, sbp_rule;
  std::vector<double> time, time_h;  // raw and censored at the horizon
  std::vector<std::uint8_t> event, event_h;
  std::vector<OutcomeStatus> outcome;
};

struct OperatingPoint {
  double threshold = kNaN;
  std::optional<ConfusionResult> confusion;
  std::string error;
};

OperatingPoint AtThreshold(std::optional<double> threshold, std::span<const double> s,
                           std::span<const OutcomeStatus> outcome, std::string error = {}) {
  OperatingPoint op;
  op.error = std::move(error);
  if (!threshold) return op;
  op.threshold = *threshold;
  try {
    op.confusion = BinaryConfusion(s, *threshold, outcome);
  } catch (const ValidationError& e) {
    op.error = e.what();
  }
  return op;
}

OperatingPoint Match(double target, std::span<const double> s,
                     std::span<const OutcomeStatus> outcome, OperatingMode mode) {
  try {
    return AtThreshold(MatchOperatingPoint(target, s, outcome, mode), s, outcome);
  } catch (const ValidationError& e) {
    return AtThreshold(std::nullopt, s, outcome, e.what());
  }
}

ojson ProportionJson(const Proportion& p) {
  ojson j;
  j["estimate"] = Num(p.estimate);
  j["ci"] = Interval(p.lo, p.hi);
  j["successes"] = p.successes;
  j["trials"] = p.trials;
  return j;
}

ojson OperatingPointJson(const OperatingPoint& op) {
  ojson j;
  j["threshold"] = Num(op.threshold);
  if (op.confusion) {
    j["sensitivity"] = ProportionJson(op.confusion->sensitivity);
    j["specificity"] = ProportionJson(op.confusion->specificity);
  } else {
    j["error"] = op.error;
  }
  return j;
}

ojson TestJson(const TestResult& t) {
  ojson j;
  j["method"] = t.method;
  j["statistic"] = Num(t.statistic);
  j["p_value"] = Num(t.p_value);
  j["margin"] = t.margin;
  if (t.n_resamples > 0) {
    j["n_resamples"] = t.n_resamples;
    j["seed"] = t.seed;
  }
  if (t.degenerate) j["degenerate"] = true;
  if (t.low_resample_warning) j["low_resample_warning"] = true;
  return j;
}

double SensitivityOn(std::span<const std::size_t> idx, const PairedData& d,
                     const std::vector<double>& s, double thr, bool sensitivity) {
  std::size_t hit = 0, total = 0;
  const OutcomeStatus want =
      sensitivity ? OutcomeStatus::kEventWithin : OutcomeStatus::kEventFree;
  for (std::size_t i : idx) {
    if (d.outcome[i] != want) continue;
    ++total;
    const bool pos = s[i] >= thr;
    hit += sensitivity ? pos : !pos;
  }
  if (total == 0) throw ValidationError("resample without both outcome classes");
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::string CalibrationCsv(const CalibrationTable& t) {
  std::ostringstream o;
  o << "bin,count,lower_score,upper_score,mean_predicted,observed\n";
  for (std::size_t b = 0; b < t.bins.size(); ++b) {
    const auto& x = t.bins[b];
    o << b + 1 << ',' << x.count << ',' << internal::FormatDouble(x.lower_score) << ','
      << internal::FormatDouble(x.upper_score) << ',' << internal::FormatDouble(x.mean_predicted)
      << ',' << internal::FormatDouble(x.observed) << '\n';
  }
  return o.str();
}

}  // namespace

void CmdEvaluate(const RunConfig& config) {
  const auto& models = config.ModelList();
  for (const auto& m : models) {
    if (!ModelSpec::Named(m).IsThresholdRule() && !fs::exists(FitPath(config, m))) {
      throw DependencyError("missing fit for model " + m + " (" +
                            FitPath(config, m).string() + "): run fit first");
    }
  }
  const Artifacts art = LoadArtifacts(config, models);
  const std::vector<CohortRow> test = LoadSplits(config).test;
  if (test.empty()) throw ValidationError("test split is empty");
  const SignalInputs sig = SignalsFor(test, art, config);
  const std::size_t n = test.size();

  // Scores per model per test row.
  std::map<std::string, std::vector<std::optional<double>>> scores;
  std::map<std::string, CoxFit> fits;
  std::vector<std::optional<double>> sbp_rule(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (test[i].sbp) sbp_rule[i] = *test[i].sbp >= 140.0 ? 1.0 : 0.0;
  }
  for (const auto& m : models) {
    const ModelSpec spec = ModelSpec::Named(m);
    if (spec.IsThresholdRule()) {
      scores[m] = sbp_rule;
      continue;
    }
    std::ifstream in(FitPath(config, m));
    CoxFit fit = ReadCoxFit(in);
    std::vector<std::optional<double>> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto f = Features(spec, test[i], sig, i);
      if (f) s[i] = PredictRisk(fit, *f, config.horizon_years).risk;
    }
    scores[m] = std::move(s);
    fits.emplace(m, std::move(fit));
  }
  const auto& ref_scores = scores.at(config.reference);

  ojson report;
  report["reference"] = config.reference;
  report["margin"] = config.margin;
  report["horizon_years"] = config.horizon_years;
  report["seed"] = config.seed;
  report["n_test"] = n;
  report["n_bootstrap"] = config.n_bootstrap;
  report["n_permutations"] = config.n_permutations;
  ojson blocks = ojson::array();

  std::vector<ScoredModel> scored_for_subgroups(models.size());

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const std::string& m = models[mi];
    const ModelSpec spec = ModelSpec::Named(m);
    const std::uint64_t mkey = ModelIndex(m);
    const auto& ms = scores.at(m);
    PairedData d;
    for (std::size_t i = 0; i < n; ++i) {
      if (!ms[i] || !ref_scores[i] || !sbp_rule[i]) continue;
      d.rows.push_back(i);
      d.score.push_back(*ms[i]);
      d.ref.push_back(*ref_scores[i]);
      d.sbp_rule.push_back(*sbp_rule[i]);
      d.time.push_back(test[i].followup_years());
      d.event.push_back(test[i].event ? 1 : 0);
    }
    d.time_h = d.time;
    d.event_h = d.event;
    CensorAtHorizon(d.time_h, d.event_h, config.horizon_years);
    d.outcome = BinaryOutcomeView(d.time, d.event, config.horizon_years);
    const std::size_t nm = d.rows.size();

    ojson b;
    b["name"] = m;
    b["n_evaluated"] = nm;
    std::size_t n_events = 0, n_free = 0;
    for (auto s : d.outcome) {
      n_events += s == OutcomeStatus::kEventWithin;
      n_free += s == OutcomeStatus::kEventFree;
    }
    b["n_events_within_horizon"] = n_events;
    b["n_event_free"] = n_free;
    if (nm < 2) {
      b["error"] = "too few complete cases";
      blocks.push_back(b);
      continue;
    }

    // Discrimination.
    auto c_on = [&](const std::vector<double>& s) {
      return [&d, &s](std::span<const std::size_t> idx) {
        std::vector<double> r, t;
        std::vector<std::uint8_t> e;
        r.reserve(idx.size());
        t.reserve(idx.size());
        e.reserve(idx.size());
        for (std::size_t i : idx) {
          r.push_back(s[i]);
          t.push_back(d.time_h[i]);
          e.push_back(d.event_h[i]);
        }
        return HarrellC(r, t, e);
      };
    };
    try {
      const BootstrapResult c = BootstrapCi(nm, c_on(d.score), config.n_bootstrap,
                                            DeriveKey(config.seed, kBootstrapStream, mkey));
      b["c_statistic"] = Num(c.point);
      b["c_ci"] = Interval(c.lo, c.hi);
      const auto cm = c_on(d.score);
      const auto cr = c_on(d.ref);
      const BootstrapResult delta = BootstrapCi(
          nm, [&](std::span<const std::size_t> idx) { return cm(idx) - cr(idx); },
          config.n_bootstrap, DeriveKey(config.seed, kBootstrapStream, mkey));
      b["reference_c_statistic"] = Num(c.point - delta.point);
      b["delta_vs_reference"] = Num(delta.point);
      b["delta_ci"] = Interval(delta.lo, delta.hi);
      const PermutationTests perm =
          PermTestCStatBoth(d.score, d.ref, d.time_h, d.event_h, config.margin,
                            config.n_permutations, DeriveKey(config.seed, kPermuteStream, mkey));
      b["p_noninferiority"] = Num(perm.noninferiority.p_value);
      b["p_superiority"] = Num(perm.superiority.p_value);
      b["noninferiority_test"] = TestJson(perm.noninferiority);
      b["superiority_test"] = TestJson(perm.superiority);
    } catch (const ValidationError& e) {
      b["c_statistic"] = nullptr;
      b["discrimination_error"] = e.what();
    }

    // Reclassification against the reference.
    try {
      const NriResult cf = NriCategoryFree(d.score, d.ref, d.outcome);
      b["cfnri"] = Num(cf.nri);
      b["cfnri_event"] = Num(cf.event);
      b["cfnri_nonevent"] = Num(cf.nonevent);
    } catch (const ValidationError& e) {
      b["cfnri"] = nullptr;
      b["cfnri_error"] = e.what();
    }

    // Operating points relative to the SBP-140 rule on the same subjects.
    std::optional<ConfusionResult> rule;
    try {
      rule = BinaryConfusion(d.sbp_rule, 1.0, d.outcome);
    } catch (const ValidationError&) {
    }
    ojson ops = ojson::object();
    ojson nri = ojson::object();
    OperatingPoint at_spec, at_sens, ref_at_spec, ref_at_sens;
    if (rule) {
      const double tspec = rule->specificity.estimate;
      const double tsens = rule->sensitivity.estimate;
      b["sbp140_sensitivity"] = Num(tsens);
      b["sbp140_specificity"] = Num(tspec);
      at_spec = Match(tspec, d.score, d.outcome, OperatingMode::kMatchSpecificity);
      at_sens = Match(tsens, d.score, d.outcome, OperatingMode::kMatchSensitivity);
      ref_at_spec = Match(tspec, d.ref, d.outcome, OperatingMode::kMatchSpecificity);
      ref_at_sens = Match(tsens, d.ref, d.outcome, OperatingMode::kMatchSensitivity);
      const OperatingPoint fixed =
          AtThreshold(kFixedRiskThreshold, d.score, d.outcome);
      const OperatingPoint ref_fixed = AtThreshold(kFixedRiskThreshold, d.ref, d.outcome);
      ops["match_specificity"] = OperatingPointJson(at_spec);
      ops["match_sensitivity"] = OperatingPointJson(at_sens);
      if (!spec.IsThresholdRule()) ops["fixed_risk"] = OperatingPointJson(fixed);

      const std::array<std::pair<const char*, std::pair<const OperatingPoint*, const OperatingPoint*>>, 3>
          modes = {{{"match_sensitivity", {&at_sens, &ref_at_sens}},
                    {"match_specificity", {&at_spec, &ref_at_spec}},
                    {"fixed_risk", {&fixed, &ref_fixed}}}};
      for (const auto& [mode, pts] : modes) {
        if (spec.IsThresholdRule() && std::string(mode) == "fixed_risk") continue;
        if (!pts.first->confusion || !pts.second->confusion) {
          nri[mode] = nullptr;
          continue;
        }
        try {
          const NriResult r = NriCategorical(d.score, d.ref, pts.first->threshold,
                                             pts.second->threshold, d.outcome);
          nri[mode] = {{"nri", Num(r.nri)}, {"event", Num(r.event)}, {"nonevent", Num(r.nonevent)}};
        } catch (const ValidationError&) {
          nri[mode] = nullptr;
        }
      }
    }
    b["operating_points"] = ops;
    b["nri"] = nri;
    if (at_spec.confusion) {
      b["sensitivity"] = Num(at_spec.confusion->sensitivity.estimate);
      b["sensitivity_ci"] = Interval(at_spec.confusion->sensitivity.lo, at_spec.confusion->sensitivity.hi);
    } else {
      b["sensitivity"] = nullptr;
      b["sensitivity_ci"] = nullptr;
    }
    if (at_sens.confusion) {
      b["specificity"] = Num(at_sens.confusion->specificity.estimate);
      b["specificity_ci"] = Interval(at_sens.confusion->specificity.lo, at_sens.confusion->specificity.hi);
    } else {
      b["specificity"] = nullptr;
      b["specificity_ci"] = nullptr;
    }

    // Non-inferiority of sensitivity / specificity against the reference
    // model at the same matched operating points.
    auto wald = [&](const OperatingPoint& mine, const OperatingPoint& theirs, bool sens,
                    std::uint64_t stream) -> ojson {
      if (!mine.confusion || !theirs.confusion) return nullptr;
      try {
        const BootstrapResult bs = BootstrapCi(
            nm,
            [&](std::span<const std::size_t> idx) {
              return SensitivityOn(idx, d, d.score, mine.threshold, sens) -
                     SensitivityOn(idx, d, d.ref, theirs.threshold, sens);
            },
            config.n_bootstrap, DeriveKey(config.seed, kWaldStream, mkey * 2 + stream));
        const TestResult t = WaldOneSided(bs.point, bs.se, config.margin);
        ojson j = TestJson(t);
        j["delta"] = Num(bs.point);
        j["se"] = Num(bs.se);
        return j;
      } catch (const ValidationError&) {
        return nullptr;
      }
    };
    b["sensitivity_noninferiority"] = wald(at_spec, ref_at_spec, true, 0);
    b["specificity_noninferiority"] = wald(at_sens, ref_at_sens, false, 1);

    // Calibration.
    if (!spec.IsThresholdRule()) {
      try {
        const CalibrationTable cal = Calibration(d.score, d.time, d.event, config.calibration_bins,
                                                 config.horizon_years, config.calibration_mode);
        b["calibration_slope"] = Num(cal.slope);
        b["calibration_intercept"] = Num(cal.intercept);
        b["calibration_mace"] = Num(cal.mean_absolute_error);
        b["calibration_bins"] = cal.bins.size();
        if (cal.merged) b["calibration_merged"] = true;
        WriteFileAtomic(config.out_dir / ("calibration_" + m + ".csv"), CalibrationCsv(cal));
      } catch (const ValidationError& e) {
        b["calibration_slope"] = nullptr;
        b["calibration_mace"] = nullptr;
        b["calibration_error"] = e.what();
      }
    } else {
      b["calibration_slope"] = nullptr;
      b["calibration_mace"] = nullptr;
    }

    // Kaplan-Meier by risk group at the matched-specificity threshold.
    {
      ojson km = ojson::object();
      std::ostringstream csv;
      csv << "group,time,survival,at_risk,events,censored\n";
      if (at_spec.confusion) {
        std::vector<double> th, tl;
        std::vector<std::uint8_t> eh, el;
        for (std::size_t i = 0; i < nm; ++i) {
          if (d.score[i] >= at_spec.threshold) {
            th.push_back(d.time[i]);
            eh.push_back(d.event[i]);
          } else {
            tl.push_back(d.time[i]);
            el.push_back(d.event[i]);
          }
        }
        km["threshold"] = Num(at_spec.threshold);
        for (const auto& [gname, t, e] :
             {std::tuple{"high", &th, &eh}, std::tuple{"low", &tl, &el}}) {
          ojson steps = ojson::array();
          if (!t->empty()) {
            const KmCurve curve = KaplanMeier(*t, *e);
            for (const auto& s : curve.steps) {
              steps.push_back(ojson::array({s.time, s.survival}));
              csv << gname << ',' << internal::FormatDouble(s.time) << ','
                  << internal::FormatDouble(s.survival) << ',' << s.at_risk << ',' << s.events
                  << ',' << s.censored << '\n';
            }
            km[std::string(gname) + "_survival_at_horizon"] = Num(curve.SurvivalAt(config.horizon_years));
          }
          km[gname] = steps;
        }
        if (!th.empty() && !tl.empty()) km["log_rank"] = TestJson(LogRank(th, eh, tl, el));
      }
      b["km_curves"] = km;
      WriteFileAtomic(config.out_dir / ("km_" + m + ".csv"), csv.str());
    }

    // Enrichment.
    try {
      ojson en = ojson::array();
      for (const auto& r : Enrichment(d.score, d.outcome)) {
        en.push_back({{"top_fraction", r.requested_fraction},
                      {"effective_fraction", r.effective_fraction},
                      {"n_top", r.n_top},
                      {"fold", Num(r.fold)}});
      }
      b["enrichment"] = en;
    } catch (const ValidationError&) {
      b["enrichment"] = nullptr;
    }

    // Coefficients.
    if (!spec.IsThresholdRule()) {
      const CoxFit& fit = fits.at(m);
      ojson coef = ojson::array();
      const auto waldp = WaldPValues(fit);
      const auto names = spec.DesignNames();
      for (std::size_t k = 0; k < spec.covariates.size(); ++k) {
        const HazardRatio hr = HazardRatioAtAge(fit, spec.covariates[k]);
        coef.push_back({{"covariate", spec.covariates[k]},
                        {"beta", Num(fit.beta(static_cast<Eigen::Index>(k)))},
                        {"p_value", Num(waldp[k].p_value)},
                        {"hazard_ratio_at_63", Num(hr.hr)},
                        {"hazard_ratio_ci", Interval(hr.lo, hr.hi)}});
      }
      for (std::size_t k = spec.covariates.size(); k < names.size(); ++k) {
        coef.push_back({{"covariate", names[k]},
                        {"beta", Num(fit.beta(static_cast<Eigen::Index>(k)))},
                        {"p_value", Num(waldp[k].p_value)}});
      }
      b["ridge_lambda"] = fit.ridge_lambda;
      b["coefficients"] = coef;
    }

    scored_for_subgroups[mi].name = m;
    scored_for_subgroups[mi].threshold = at_spec.threshold;
    scored_for_subgroups[mi].binary_score = spec.IsThresholdRule();
    blocks.push_back(b);
  }
  report["models"] = blocks;

  if (config.subgroups) {
    // Subjects scored by every model.
    std::vector<CohortRow> rows;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
      bool all = true;
      for (const auto& m : models) all &= scores.at(m)[i].has_value();
      if (all) keep.push_back(i);
    }
    for (std::size_t i : keep) rows.push_back(test[i]);
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      for (std::size_t i : keep) scored_for_subgroups[mi].risk.push_back(*scores.at(models[mi])[i]);
      if (std::isnan(scored_for_subgroups[mi].threshold)) {
        scored_for_subgroups[mi].threshold = std::numeric_limits<double>::infinity();
      }
    }
    SubgroupOptions opt;
    opt.quintile_cutoff = config.quintile_cutoff;
    opt.margin = config.margin;
    opt.n_permutations = config.subgroup_permutations;
    opt.seed = DeriveKey(config.seed, kSubgroupStream);
    opt.horizon_years = config.horizon_years;
    opt.reference_index = static_cast<std::size_t>(
        std::find(models.begin(), models.end(), config.reference) - models.begin());
    ojson sg = ojson::array();
    for (const auto& r : SubgroupAnalysis(scored_for_subgroups, rows, DefaultSubgroups(), opt)) {
      ojson g;
      g["subgroup"] = r.subgroup;
      g["n"] = r.n;
      g["skipped"] = r.skipped;
      ojson ms = ojson::array();
      for (const auto& x : r.models) {
        ojson j;
        j["name"] = x.model;
        j["c_statistic"] = Num(x.c_statistic);
        j["p_noninferiority"] = x.noninferiority ? Num(x.noninferiority->p_value) : ojson(nullptr);
        j["p_superiority"] = x.superiority ? Num(x.superiority->p_value) : ojson(nullptr);
        if (x.confusion) {
          j["sensitivity"] = Num(x.confusion->sensitivity.estimate);
          j["sensitivity_ci"] = Interval(x.confusion->sensitivity.lo, x.confusion->sensitivity.hi);
          j["specificity"] = Num(x.confusion->specificity.estimate);
          j["specificity_ci"] = Interval(x.confusion->specificity.lo, x.confusion->specificity.hi);
        }
        j["average_predicted_risk"] = Num(x.average_predicted_risk);
        if (x.calibration) {
          j["calibration_slope"] = Num(x.calibration->slope);
          j["calibration_mace"] = Num(x.calibration->mean_absolute_error);
          j["calibration_bins"] = x.calibration->bins.size();
        }
        ms.push_back(j);
      }
      g["models"] = ms;
      sg.push_back(g);
    }
    report["subgroups"] = sg;
  }

  WriteFileAtomic(config.out_dir / "report.json", report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

namespace {

std::string Pct(const ojson& v) {
  if (!v.is_number()) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(1) << v.get<double>() * 100.0;
  return o.str();
}

std::string PctCi(const ojson& v, const ojson& ci) {
  if (!v.is_number()) return "-";
  std::string s = Pct(v);
  if (ci.is_array() && ci.size() == 2) s += " (" + Pct(ci[0]) + "-" + Pct(ci[1]) + ")";
  return s;
}

std::string P(const ojson& v) {
  if (!v.is_number()) return "-";
  const double p = v.get<double>();
  std::ostringstream o;
  if (p < 0.001) {
    o << "<0.001";
  } else {
    o << std::fixed << std::setprecision(3) << p;
  }
  return o.str();
}

void Table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      out << (c == 0 ? "" : "  ") << std::left << std::setw(static_cast<int>(width[c]))
          << rows[i][c];
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
}

}  // namespace

void CmdReport(const RunConfig& config, std::ostream& out) {
  const fs::path path = config.out_dir / "report.json";
  if (!fs::exists(path)) throw DependencyError("report " + path.string() + " not found: run evaluate first");
  ojson r;
  try {
    r = ojson::parse(ReadFile(path));
  } catch (const ojson::parse_error& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
  const std::string ref = r.value("reference", std::string());
  out << "Discrimination on the test split (n = " << r.value("n_test", 0) << ", reference "
      << ref << ", margin " << Pct(r["margin"]) << "%)\n\n";
  std::vector<std::vector<std::string>> t1 = {
      {"Model", "C-statistic % (95% CI)", "Delta %", "P non-inferiority", "P superiority",
       "cfNRI %"}};
  for (const auto& b : r["models"]) {
    t1.push_back({b.value("name", std::string()), PctCi(b["c_statistic"], b["c_ci"]),
                  Pct(b["delta_vs_reference"]), P(b["p_noninferiority"]), P(b["p_superiority"]),
                  Pct(b["cfnri"])});
  }
  Table(out, t1);
  out << "\nOperating points matched to SBP >= 140\n\n";
  std::vector<std::vector<std::string>> t2 = {
      {"Model", "Sensitivity % @ matched spec", "Specificity % @ matched sens", "NRI % (spec)",
       "Calibration slope", "Calibration error %"}};
  for (const auto& b : r["models"]) {
    std::string nri = "-";
    if (b.contains("nri") && b["nri"].contains("match_specificity") &&
        b["nri"]["match_specificity"].is_object()) {
      nri = Pct(b["nri"]["match_specificity"]["nri"]);
    }
    std::string slope = "-";
    if (b.contains("calibration_slope") && b["calibration_slope"].is_number()) {
      std::ostringstream o;
      o << std::fixed << std::setprecision(2) << b["calibration_slope"].get<double>();
      slope = o.str();
    }
    t2.push_back({b.value("name", std::string()), PctCi(b["sensitivity"], b["sensitivity_ci"]),
                  PctCi(b["specificity"], b["specificity_ci"]), nri, slope,
                  Pct(b.value("calibration_mace", ojson(nullptr)))});
  }
  Table(out, t2);
  if (r.contains("subgroups")) {
    out << "\nSubgroup C-statistics %\n\n";
    std::vector<std::vector<std::string>> t3 = {{"Subgroup", "n"}};
    for (const auto& b : r["models"]) t3[0].push_back(b.value("name", std::string()));
    for (const auto& g : r["subgroups"]) {
      std::vector<std::string> row = {g.value("subgroup", std::string()),
                                      std::to_string(g.value("n", 0))};
      if (g.value("skipped", false)) {
        row.push_back("skipped");
      } else {
        for (const auto& m : g["models"]) row.push_back(Pct(m["c_statistic"]));
      }
      t3.push_back(row);
    }
    Table(out, t3);
  }
}

}  // namespace ppgrisk
