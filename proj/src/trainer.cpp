// src/trainer.cpp
// Copyright 2026 The nrser Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "nrser/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "nrser/optim.hpp"
#include "nrser/spectrogram_tensor.hpp"

namespace nrser {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {
    "baseline_c", "baseline_n", "baseline_e", "trnet", "trnet_no_low", "trnet_no_high"};

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> SplitList(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(Trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw UsageError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) +
                     "'");
  return out;
}

bool ParseBool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + std::string(key) + "': expected true or false");
}

template <typename T>
std::string JoinList(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += FormatDouble(values[i]);
    else
      out += std::to_string(values[i]);
  }
  return out;
}

ag::Var ConstantOf(const Spectrogram& s) { return ag::Constant(ToTensor(s)); }

Spectrogram FirstRows(const Spectrogram& s, std::size_t max_rows) {
  const Eigen::Index rows = std::min<Eigen::Index>(s.rows(), static_cast<Eigen::Index>(max_rows));
  return s.topRows(rows);
}

std::string SnrKey(const std::optional<double>& snr) {
  return snr ? FormatDouble(*snr) : std::string("clean");
}

const ag::Tensor& Block(const std::vector<NamedTensor>& blocks, std::string_view name) {
  for (const auto& b : blocks)
    if (b.name == name) return b.value;
  throw DataError("checkpoint is missing block '" + std::string(name) + "'");
}

// Running sums behind one EpochRecord.
struct SplitStats {
  ConfusionMatrix cm;
  double total = 0, task = 0, low = 0, high = 0;
  std::size_t count = 0;
  std::map<std::string, std::pair<double, std::size_t>> c_sum;

  void Add(const LossTerms& t, const ForwardOutput& out, const TrainingExample& ex) {
    total += t.total.item();
    task += t.task.item();
    if (t.low.defined()) low += t.low.item();
    if (t.high.defined()) high += t.high.item();
    ++count;
    cm.Add(static_cast<std::size_t>(ex.label()), Argmax(out.logits.value()));
    if (out.coefficient.defined()) {
      auto& [sum, n] = c_sum[SnrKey(ex.snr_db)];
      sum += out.coefficient.item();
      ++n;
    }
  }

  EpochRecord Finish(int epoch, std::string split, bool compensating) const {
    EpochRecord r;
    r.epoch = epoch;
    r.split = std::move(split);
    r.examples = count;
    const double n = static_cast<double>(std::max<std::size_t>(count, 1));
    r.loss_total = total / n;
    r.loss_task = task / n;
    if (compensating) {
      r.loss_low = low / n;
      r.loss_high = high / n;
    }
    r.uar = Uar(cm);
    r.war = War(cm);
    for (const auto& [key, v] : c_sum) r.mean_c[key] = v.first / static_cast<double>(v.second);
    return r;
  }
};

}  // namespace

std::string_view ToString(ModelKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

ModelKind ModelKindFromString(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<ModelKind>(i);
  throw UsageError("unknown model kind '" + std::string(s) + "'");
}

bool IsCompensating(ModelKind k) {
  return k == ModelKind::kTrnet || k == ModelKind::kTrnetNoLow || k == ModelKind::kTrnetNoHigh;
}

bool UsesNoisyData(ModelKind k) { return k != ModelKind::kBaselineC; }

bool UsesEnhancer(ModelKind k) { return k == ModelKind::kBaselineE || IsCompensating(k); }

double TrainConfig::EffectiveAlpha() const {
  if (!IsCompensating(model) || model == ModelKind::kTrnetNoLow) return 0.0;
  return alpha;
}

double TrainConfig::EffectiveBeta() const {
  if (!IsCompensating(model) || model == ModelKind::kTrnetNoHigh) return 0.0;
  return beta;
}

void TrainConfig::Validate() const {
  if (!(alpha >= 0) || !(beta >= 0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw UsageError("alpha and beta must be finite and >= 0");
  if (!(lr > 0) || !std::isfinite(lr)) throw UsageError("lr must be positive");
  if (batch == 0) throw UsageError("batch must be >= 1");
  if (max_epochs < 0) throw UsageError("max_epochs must be >= 0");
  if (max_frames != kMaxFrames)
    throw UsageError("max_frames must be " + std::to_string(kMaxFrames) +
                     " (the encoder geometry is fixed)");
  if (seeds.empty()) throw UsageError("seeds must not be empty");
  if (snrs.empty()) throw UsageError("snrs must not be empty");
  for (double s : snrs)
    if (!std::isfinite(s)) throw UsageError("snrs must be finite");
  if (folds.empty()) throw UsageError("folds must not be empty");
  for (int f : folds)
    if (f < 0) throw UsageError("folds must be >= 0");
  if (UsesEnhancer(model)) MakeEnhancer(enhancer);
}

TrainConfig ParseTrainConfig(std::string_view text) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = Trim(line.substr(0, eq));
    const std::string_view value = Trim(line.substr(eq + 1));
    if (key == "model") {
      cfg.model = ModelKindFromString(value);
    } else if (key == "alpha") {
      cfg.alpha = ParseNumber<double>(key, value);
    } else if (key == "beta") {
      cfg.beta = ParseNumber<double>(key, value);
    } else if (key == "lr") {
      cfg.lr = ParseNumber<double>(key, value);
    } else if (key == "batch") {
      cfg.batch = ParseNumber<std::size_t>(key, value);
    } else if (key == "max_epochs") {
      cfg.max_epochs = ParseNumber<int>(key, value);
    } else if (key == "max_frames") {
      cfg.max_frames = ParseNumber<std::size_t>(key, value);
    } else if (key == "seeds") {
      cfg.seeds.clear();
      for (auto v : SplitList(value)) cfg.seeds.push_back(ParseNumber<std::uint64_t>(key, v));
    } else if (key == "enhancer") {
      cfg.enhancer = std::string(value);
    } else if (key == "snrs") {
      cfg.snrs.clear();
      for (auto v : SplitList(value)) cfg.snrs.push_back(ParseNumber<double>(key, v));
    } else if (key == "classify_calibrated") {
      cfg.classify_calibrated = ParseBool(key, value);
    } else if (key == "init_from_reference") {
      cfg.init_from_reference = ParseBool(key, value);
    } else if (key == "folds") {
      cfg.folds.clear();
      for (auto v : SplitList(value)) cfg.folds.push_back(ParseNumber<int>(key, v));
    } else if (key == "reference") {
      cfg.reference = std::string(value);
    } else {
      throw UsageError("unknown config key '" + std::string(key) + "'");
    }
  }
  return cfg;
}

std::string FormatTrainConfig(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "model = " << ToString(cfg.model) << "\n"
     << "alpha = " << FormatDouble(cfg.alpha) << "\n"
     << "beta = " << FormatDouble(cfg.beta) << "\n"
     << "lr = " << FormatDouble(cfg.lr) << "\n"
     << "batch = " << cfg.batch << "\n"
     << "max_epochs = " << cfg.max_epochs << "\n"
     << "max_frames = " << cfg.max_frames << "\n"
     << "seeds = " << JoinList(cfg.seeds) << "\n"
     << "enhancer = " << cfg.enhancer << "\n"
     << "snrs = " << JoinList(cfg.snrs) << "\n"
     << "classify_calibrated = " << (cfg.classify_calibrated ? "true" : "false") << "\n"
     << "init_from_reference = " << (cfg.init_from_reference ? "true" : "false") << "\n"
     << "folds = " << JoinList(cfg.folds) << "\n"
     << "reference = " << cfg.reference << "\n";
  return os.str();
}

TrainConfig LoadTrainConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseTrainConfig(ss.str());
}

PaddedSpectrogram PadOrTruncate(const Spectrogram& s, std::size_t max_frames) {
  if (s.rows() == 0 || s.cols() == 0) throw DataError("cannot pad an empty spectrogram");
  const auto rows = static_cast<Eigen::Index>(max_frames);
  const Eigen::Index real = std::min(s.rows(), rows);
  PaddedSpectrogram out;
  out.values = Spectrogram::Constant(rows, s.cols(), std::log(kLogFloor));
  out.values.topRows(real) = s.topRows(real);
  out.mask.assign(max_frames, false);
  std::fill(out.mask.begin(), out.mask.begin() + real, true);
  return out;
}

TrainingExample::TrainingExample(std::string id, Emotion label, Spectrogram noisy,
                                 Spectrogram enhanced, Spectrogram target)
    : id_(std::move(id)),
      label_(label),
      noisy_(std::move(noisy)),
      enhanced_(std::move(enhanced)),
      target_(std::move(target)) {
  if (noisy_.rows() == 0 || noisy_.rows() != enhanced_.rows() ||
      noisy_.rows() != target_.rows() || noisy_.cols() != enhanced_.cols() ||
      noisy_.cols() != target_.cols())
    throw DataError("training example features must share a non-empty shape");
}

std::vector<bool> TrainingExample::Mask(std::size_t max_frames) const {
  return PadOrTruncate(noisy_, max_frames).mask;
}

TrainingExample MakeTrainingView(const std::string& id, Emotion label, const Waveform& clean,
                                 const Waveform* noise, std::optional<double> snr_db,
                                 const Enhancer* enhancer, std::uint64_t crop_seed,
                                 std::size_t max_frames) {
  if (noise && !snr_db) throw UsageError("a noisy view needs a target SNR");
  std::optional<MixResult> mix;
  if (noise) mix = MixAtSnr(clean, *noise, *snr_db, crop_seed);
  const Waveform& input = mix ? mix->mixture : clean;
  const Spectrogram noisy = FirstRows(Lmfb(input), max_frames);
  Spectrogram enhanced =
      enhancer ? FirstRows(Lmfb(enhancer->Enhance(input, &clean)), max_frames) : noisy;
  TrainingExample ex(id, label, noisy, std::move(enhanced), FirstRows(Lmfb(clean), max_frames));
  if (mix) {
    ex.snr_db = snr_db;
    ex.measured_snr_db = MeasureSnr(clean, mix->scaled_noise);
  }
  return ex;
}

Model Model::Create(ModelKind kind, std::uint64_t seed, bool classify_calibrated) {
  Model m;
  m.kind = kind;
  m.ser = SerParams::Init(MixSeed(seed, 0x5e7));
  m.snr = SnrAwareParams::Init();
  m.bridge = BridgeParams::Identity();
  m.classify_calibrated = classify_calibrated;
  m.seed = seed;
  return m;
}

std::vector<ag::Var> Model::Trainable() const {
  std::vector<ag::Var> out = ser.Trainable();
  if (IsCompensating(kind)) {
    for (const auto& v : snr.Trainable()) out.push_back(v);
    for (const auto& v : bridge.Trainable()) out.push_back(v);
  }
  return out;
}

std::vector<NamedTensor> Model::Export() const {
  std::vector<NamedTensor> out;
  out.push_back({"meta.kind", ag::Tensor({1}, static_cast<double>(kind))});
  out.push_back({"meta.classify_calibrated", ag::Tensor({1}, classify_calibrated ? 1.0 : 0.0)});
  out.push_back({"meta.fold", ag::Tensor({1}, static_cast<double>(fold))});
  out.push_back({"meta.seed", ag::Tensor({1}, static_cast<double>(seed))});
  ser.Export(out);
  if (IsCompensating(kind)) {
    snr.Export(out);
    bridge.Export(out);
  }
  return out;
}

Model Model::Import(const std::vector<NamedTensor>& blocks) {
  Model m;
  const double kind = Block(blocks, "meta.kind").item();
  if (kind < 0 || kind >= static_cast<double>(kAllModelKinds.size()) || kind != std::floor(kind))
    throw DataError("checkpoint has an invalid model kind");
  m.kind = static_cast<ModelKind>(static_cast<int>(kind));
  m.classify_calibrated = Block(blocks, "meta.classify_calibrated").item() != 0.0;
  m.fold = static_cast<int>(Block(blocks, "meta.fold").item());
  m.seed = static_cast<std::uint64_t>(Block(blocks, "meta.seed").item());
  m.ser = SerParams::Import(blocks, true);
  m.snr = SnrAwareParams::Init();
  m.bridge = BridgeParams::Identity();
  if (IsCompensating(m.kind)) {
    auto load = [&](ag::Var& dst, std::string_view name) {
      const ag::Tensor& t = Block(blocks, name);
      if (t.shape() != dst.shape())
        throw DataError("checkpoint block '" + std::string(name) + "' has shape " +
                        ag::ShapeToString(t.shape()));
      dst = ag::Parameter(t);
    };
    load(m.snr.weight, "snr.weight");
    load(m.snr.bias, "snr.bias");
    load(m.bridge.scale_weight, "bridge.scale.weight");
    load(m.bridge.scale_bias, "bridge.scale.bias");
    load(m.bridge.shift_weight, "bridge.shift.weight");
    load(m.bridge.shift_bias, "bridge.shift.bias");
  }
  return m;
}

Model Model::Clone() const { return Import(Export()); }

void Model::Save(const std::filesystem::path& path) const { SaveCheckpoint(path, Export()); }

Model Model::Load(const std::filesystem::path& path) { return Import(LoadCheckpoint(path)); }

ag::Tensor ReferenceRepresentation(const Spectrogram& clean, const SerParams& frozen) {
  return EncodeValid(ConstantOf(FirstRows(clean, kMaxFrames)), frozen.encoder).value();
}

ForwardOutput Forward(const Model& m, const Spectrogram& noisy, const Spectrogram& enhanced) {
  if (noisy.rows() != enhanced.rows() || noisy.cols() != enhanced.cols())
    throw DataError("noisy and enhanced features differ in shape");
  ForwardOutput out;
  const Spectrogram x = FirstRows(noisy, kMaxFrames);
  if (!IsCompensating(m.kind)) {
    const Spectrogram& input = m.kind == ModelKind::kBaselineE ? enhanced : noisy;
    out.rep = EncodeValid(ConstantOf(FirstRows(input, kMaxFrames)), m.ser.encoder);
    out.calibrated = out.rep;
    out.logits = Classify(out.rep, m.ser.classifier);
    return out;
  }
  const Spectrogram xe = FirstRows(enhanced, kMaxFrames);
  const SnrCoefficient coef = EstimateCoefficient(SimilarityVector(x, xe), m.snr);
  out.coefficient = coef.value;
  out.compensated = Compensate(ConstantOf(x), ConstantOf(xe), coef.value);
  out.rep = EncodeValid(out.compensated, m.ser.encoder);
  out.calibrated = Calibrate(out.rep, coef.value, m.bridge);
  out.logits = Classify(m.classify_calibrated ? out.calibrated : out.rep, m.ser.classifier);
  return out;
}

LossTerms ExampleLoss(const Model& m, const TrainingExample& ex, const ag::Tensor* reference_rep,
                      double alpha, double beta, ForwardOutput* out) {
  if (IsCompensating(m.kind) && !reference_rep)
    throw UsageError("model kind '" + std::string(ToString(m.kind)) +
                     "' requires a frozen reference representation");
  ForwardOutput fwd = Forward(m, ex.noisy(), ex.enhanced());
  LossTerms t;
  t.task = ag::CrossEntropy(fwd.logits, static_cast<std::size_t>(ex.label()));
  t.total = t.task;
  if (IsCompensating(m.kind)) {
    t.low = LowLevelLoss(ConstantOf(FirstRows(ex.target(), kMaxFrames)), fwd.compensated);
    t.high = HighLevelLoss(ag::Constant(*reference_rep), fwd.calibrated);
    if (alpha != 0.0) t.total = ag::Add(t.total, ag::Scale(t.low, alpha));
    if (beta != 0.0) t.total = ag::Add(t.total, ag::Scale(t.high, beta));
  }
  if (out) *out = std::move(fwd);
  return t;
}

LossTerms TotalLoss(const Model& m, const std::vector<const TrainingExample*>& batch,
                    const std::vector<const ag::Tensor*>& reference_reps, double alpha,
                    double beta) {
  if (batch.empty()) throw DataError("empty batch");
  if (IsCompensating(m.kind) && reference_reps.size() != batch.size())
    throw UsageError("model kind '" + std::string(ToString(m.kind)) +
                     "' requires one frozen reference representation per example");
  LossTerms sum;
  auto accumulate = [](ag::Var& acc, const ag::Var& v) {
    if (!v.defined()) return;
    acc = acc.defined() ? ag::Add(acc, v) : v;
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ag::Tensor* ref = reference_reps.empty() ? nullptr : reference_reps[i];
    const LossTerms t = ExampleLoss(m, *batch[i], ref, alpha, beta);
    accumulate(sum.total, t.total);
    accumulate(sum.task, t.task);
    accumulate(sum.low, t.low);
    accumulate(sum.high, t.high);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossTerms mean;
  mean.total = ag::Scale(sum.total, inv);
  mean.task = ag::Scale(sum.task, inv);
  if (sum.low.defined()) mean.low = ag::Scale(sum.low, inv);
  if (sum.high.defined()) mean.high = ag::Scale(sum.high, inv);
  return mean;
}

CorpusData::CorpusData(Manifest m) : manifest_(std::move(m)), sessions_(manifest_.Sessions()) {}

const Waveform& CorpusData::Utterance(const UtteranceRecord& u) {
  auto it = utterances_.find(u.id);
  if (it == utterances_.end())
    it = utterances_.emplace(u.id, ReadWav(manifest_.Resolve(u.path))).first;
  return it->second;
}

const Waveform& CorpusData::Noise(const NoiseRecord& n) {
  auto it = noises_.find(n.id);
  if (it == noises_.end()) it = noises_.emplace(n.id, ReadWav(manifest_.Resolve(n.path))).first;
  return it->second;
}

std::vector<const NoiseRecord*> CorpusData::NoisePool(NoiseSet set,
                                                      const std::string& session) const {
  std::vector<const NoiseRecord*> all;
  for (const auto& n : manifest_.noises)
    if (n.noise_set == set) all.push_back(&n);
  if (all.empty())
    throw DataError("manifest has no '" + std::string(ToString(set)) + "' noise recordings");
  const auto pos = std::find(sessions_.begin(), sessions_.end(), session);
  if (pos == sessions_.end()) return all;
  const std::size_t index = static_cast<std::size_t>(pos - sessions_.begin());
  std::vector<const NoiseRecord*> pool;
  for (std::size_t j = 0; j < all.size(); ++j)
    if (j % sessions_.size() == index) pool.push_back(all[j]);
  return pool.empty() ? all : pool;
}

std::pair<ag::Tensor, ag::Tensor> CleanNormalization(
    CorpusData& data, const std::vector<const UtteranceRecord*>& utterances) {
  if (utterances.empty()) throw DataError("no utterances for normalization statistics");
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(kNumMelBins);
  Eigen::ArrayXd sq = Eigen::ArrayXd::Zero(kNumMelBins);
  double frames = 0;
  for (const UtteranceRecord* u : utterances) {
    const Spectrogram s = FirstRows(Lmfb(data.Utterance(*u)), kMaxFrames);
    sum += s.colwise().sum().transpose().array();
    sq += s.array().square().colwise().sum().transpose();
    frames += static_cast<double>(s.rows());
  }
  ag::Tensor mean({static_cast<std::size_t>(kNumMelBins)});
  ag::Tensor stdev({static_cast<std::size_t>(kNumMelBins)});
  for (int i = 0; i < kNumMelBins; ++i) {
    const double mu = sum[i] / frames;
    mean[i] = mu;
    stdev[i] = std::max(1e-3, std::sqrt(std::max(0.0, sq[i] / frames - mu * mu)));
  }
  return {mean, stdev};
}

std::string EpochRecord::ToJson() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["examples"] = examples;
  j["loss_total"] = loss_total;
  j["loss_task"] = loss_task;
  j["loss_low"] = loss_low ? nlohmann::ordered_json(*loss_low) : nlohmann::ordered_json();
  j["loss_high"] = loss_high ? nlohmann::ordered_json(*loss_high) : nlohmann::ordered_json();
  j["uar"] = uar;
  j["war"] = war;
  j["mean_c"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : mean_c) j["mean_c"][k] = v;
  return j.dump();
}

TrainResult Train(const TrainConfig& cfg, std::uint64_t seed, const FoldSplit& fold,
                  CorpusData& data, const Model* reference,
                  const std::function<void(const EpochRecord&)>& on_record) {
  cfg.Validate();
  const ModelKind kind = cfg.model;
  const bool compensating = IsCompensating(kind);
  if (compensating && !reference)
    throw UsageError("model kind '" + std::string(ToString(kind)) +
                     "' requires a frozen clean reference checkpoint");
  const Manifest& manifest = data.manifest();
  const std::vector<const UtteranceRecord*> train_utts = fold.TrainUtterances(manifest);
  const std::vector<const UtteranceRecord*> val_utts =
      fold.SpeakerUtterances(manifest, fold.validation_speaker);
  if (train_utts.empty()) throw DataError("empty training split");
  if (val_utts.empty()) throw DataError("empty validation split");

  std::unique_ptr<Enhancer> enhancer;
  if (UsesEnhancer(kind)) enhancer = MakeEnhancer(cfg.enhancer);

  Model model = Model::Create(kind, seed, cfg.classify_calibrated);
  if (compensating && cfg.init_from_reference) model.ser = reference->ser.Clone();
  {
    auto [mean, stdev] = CleanNormalization(data, train_utts);
    model.ser.SetNormalization(std::move(mean), std::move(stdev));
  }
  model.fold = fold.index;

  // Frozen reference representations, keyed by utterance id.
  std::map<std::string, ag::Tensor> reference_reps;
  std::optional<SerParams> frozen;
  if (compensating) frozen = reference->ser.Frozen();
  auto reference_rep = [&](const TrainingExample& ex) -> const ag::Tensor* {
    if (!frozen) return nullptr;
    auto it = reference_reps.find(ex.id());
    if (it == reference_reps.end())
      it = reference_reps.emplace(ex.id(), ReferenceRepresentation(ex.target(), *frozen)).first;
    return &it->second;
  };

  auto clean_view = [&](const UtteranceRecord& u) {
    return MakeTrainingView(u.id, u.emotion, data.Utterance(u), nullptr, std::nullopt,
                            enhancer.get());
  };
  auto noisy_view = [&](const UtteranceRecord& u, std::uint64_t draw_seed) {
    std::mt19937_64 rng(draw_seed);
    const auto pool = data.NoisePool(NoiseSet::kMatched, u.session);
    const NoiseRecord* noise = pool[rng() % pool.size()];
    const double snr = cfg.snrs[rng() % cfg.snrs.size()];
    TrainingExample ex = MakeTrainingView(u.id, u.emotion, data.Utterance(u), &data.Noise(*noise),
                                          snr, enhancer.get(), rng());
    ex.noise_id = noise->id;
    return ex;
  };

  std::vector<TrainingExample> clean_train;
  for (const UtteranceRecord* u : train_utts) clean_train.push_back(clean_view(*u));

  // The validation set is fixed per utterance so every kind and seed sees
  // the same views.
  std::vector<TrainingExample> validation;
  for (const UtteranceRecord* u : val_utts) validation.push_back(clean_view(*u));
  if (UsesNoisyData(kind)) {
    for (const UtteranceRecord* u : val_utts) {
      const auto pool = data.NoisePool(NoiseSet::kMatched, u->session);
      for (std::size_t k = 0; k < cfg.snrs.size(); ++k) {
        std::mt19937_64 rng(MixSeed(HashString(u->id), k));
        const NoiseRecord* noise = pool[rng() % pool.size()];
        TrainingExample ex = MakeTrainingView(u->id, u->emotion, data.Utterance(*u),
                                              &data.Noise(*noise), cfg.snrs[k], enhancer.get(),
                                              rng());
        ex.noise_id = noise->id;
        validation.push_back(std::move(ex));
      }
    }
  }

  const double alpha = cfg.EffectiveAlpha();
  const double beta = cfg.EffectiveBeta();
  TrainResult result;
  auto emit = [&](const EpochRecord& r) {
    result.log.push_back(r);
    if (on_record) on_record(r);
  };
  auto validate = [&](int epoch) {
    SplitStats stats;
    for (const TrainingExample& ex : validation) {
      ForwardOutput out;
      const LossTerms t = ExampleLoss(model, ex, reference_rep(ex), alpha, beta, &out);
      stats.Add(t, out, ex);
    }
    EpochRecord r = stats.Finish(epoch, "validation", compensating);
    emit(r);
    return r.uar;
  };

  result.initial_validation_uar = validate(0);
  result.best_validation_uar = result.initial_validation_uar;
  result.best_epoch = 0;
  result.model = model.Clone();

  const std::vector<ag::Var> params = model.Trainable();
  ag::Adam opt(params, ag::AdamConfig{cfg.lr});
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(MixSeed(seed, static_cast<std::uint64_t>(epoch)));
    std::vector<TrainingExample> noisy_train;
    if (UsesNoisyData(kind))
      for (const UtteranceRecord* u : train_utts) noisy_train.push_back(noisy_view(*u, rng()));
    std::vector<const TrainingExample*> order;
    for (const auto& ex : clean_train) order.push_back(&ex);
    for (const auto& ex : noisy_train) order.push_back(&ex);
    std::shuffle(order.begin(), order.end(), rng);

    SplitStats stats;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double seed_grad = 1.0 / static_cast<double>(end - start);
      opt.ZeroGrad();
      for (std::size_t i = start; i < end; ++i) {
        ForwardOutput out;
        const LossTerms t = ExampleLoss(model, *order[i], reference_rep(*order[i]), alpha, beta,
                                        &out);
        ag::Backward(t.total, seed_grad);
        stats.Add(t, out, *order[i]);
      }
      opt.Step();
    }
    emit(stats.Finish(epoch, "train", compensating));
    const double uar = validate(epoch);
    if (uar > result.best_validation_uar) {
      result.best_validation_uar = uar;
      result.best_epoch = epoch;
      result.model = model.Clone();
    }
  }
  return result;
}

OverfitResult OverfitProbe(Model model, const std::vector<const TrainingExample*>& batch,
                           const std::vector<const ag::Tensor*>& reference_reps, double alpha,
                           double beta, int max_steps, double lr) {
  if (batch.empty()) throw DataError("empty probe batch");
  const std::vector<ag::Var> params = model.Trainable();
  ag::Adam opt(params, ag::AdamConfig{lr});
  const double seed_grad = 1.0 / static_cast<double>(batch.size());
  OverfitResult r;
  for (int step = 0;; ++step) {
    opt.ZeroGrad();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const ag::Tensor* ref = reference_reps.empty() ? nullptr : reference_reps[i];
      ForwardOutput out;
      const LossTerms t = ExampleLoss(model, *batch[i], ref, alpha, beta, &out);
      if (Argmax(out.logits.value()) == static_cast<std::size_t>(batch[i]->label())) ++correct;
      if (step < max_steps) ag::Backward(t.total, seed_grad);
    }
    r.steps = step;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(batch.size());
    if (correct == batch.size()) {
      r.reached = true;
      break;
    }
    if (step == max_steps) break;
    opt.Step();
  }
  return r;
}

}  // namespace nrser
