#include "ttvi/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "ttvi/checkpoint.hpp"
#include "ttvi/errors.hpp"
#include "ttvi/metrics.hpp"
#include "ttvi/rng.hpp"

namespace ttvi {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----------------------------------------------------------------

namespace {

json shift_to_json(const synth::ShiftSpec& s) { return {{"kind", synth::shift_name(s.kind)}, {"magnitude", s.magnitude}}; }

std::vector<std::string> partitions_to_names(const std::array<bool, 4>& flags) {
  std::vector<std::string> out;
  for (auto p : kAllPartitions) {
    if (flags[static_cast<std::size_t>(p)]) out.emplace_back(partition_name(p));
  }
  return out;
}

template <typename T>
void read_if(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.n_train < 1) throw DomainError("config: data.n_train must be >= 1");
  if (data.n_test < 1) throw DomainError("config: data.n_test must be >= 1");
  data.sequence.validate();
  arch.validate();
  if (arch.volume != data.sequence.grid) {
    throw ContractError("config: arch.volume differs from data.sequence.grid");
  }
  train.validate();
  ttt.validate();
  if (eval.schemes.empty() && !eval.include_no_ttt) throw ContractError("config: empty evaluation grid");
  for (std::size_t a = 0; a < 3; ++a) {
    if (ttt.mask_patch[a] == 0 || arch.volume[a] % ttt.mask_patch[a] != 0 || train.mask_patch[a] == 0 ||
        arch.volume[a] % train.mask_patch[a] != 0) {
      throw ContractError("config: mask patch does not divide the volume");
    }
  }
}

json to_json(const ExperimentConfig& cfg) {
  json shifts = json::array();
  for (const auto& s : cfg.data.test_shifts) shifts.push_back(shift_to_json(s));
  json schemes = json::array(), tasks = json::array();
  for (auto s : cfg.eval.schemes) schemes.push_back(scheme_name(s));
  for (auto t : cfg.eval.tasks) tasks.push_back(task_name(t));
  const auto& seq = cfg.data.sequence;
  return {
      {"seed", cfg.seed},
      {"out", cfg.out},
      {"data",
       {{"n_train", cfg.data.n_train},
        {"n_test", cfg.data.n_test},
        {"sequence",
         {{"grid", seq.grid},
          {"n_frames", seq.n_frames},
          {"motion", synth::motion_name(seq.motion)},
          {"amplitude", seq.amplitude},
          {"noise_floor", seq.noise_floor}}},
        {"test_shifts", shifts}}},
      {"arch", arch_to_json(cfg.arch)},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"lr", cfg.train.lr},
        {"batch_size", cfg.train.batch_size},
        {"aux_weight", cfg.train.aux_weight},
        {"interpolation", cfg.train.interpolation},
        {"rotation", cfg.train.rotation},
        {"mae", cfg.train.mae},
        {"mask_patch", cfg.train.mask_patch},
        {"mask_ratio", cfg.train.mask_ratio}}},
      {"ttt",
       {{"eta", cfg.ttt.eta},
        {"ttt_epochs", cfg.ttt.ttt_epochs},
        {"batch_size", cfg.ttt.batch_size},
        {"freeze", partitions_to_names(cfg.ttt.freeze)},
        {"optimizer", cfg.ttt.optimizer == Optimizer::adam ? "adam" : "sgd"},
        {"mask_patch", cfg.ttt.mask_patch},
        {"mask_ratio", cfg.ttt.mask_ratio}}},
      {"eval", {{"schemes", schemes}, {"tasks", tasks}, {"no_ttt", cfg.eval.include_no_ttt}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    read_if(j, "seed", cfg.seed);
    read_if(j, "out", cfg.out);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      read_if(d, "n_train", cfg.data.n_train);
      read_if(d, "n_test", cfg.data.n_test);
      if (d.contains("sequence")) {
        const auto& s = d.at("sequence");
        auto& seq = cfg.data.sequence;
        read_if(s, "grid", seq.grid);
        read_if(s, "n_frames", seq.n_frames);
        if (s.contains("motion")) seq.motion = synth::parse_motion(s.at("motion").get<std::string>());
        read_if(s, "amplitude", seq.amplitude);
        read_if(s, "noise_floor", seq.noise_floor);
        cfg.arch.volume = seq.grid;
      }
      if (d.contains("test_shifts")) {
        for (const auto& s : d.at("test_shifts")) {
          cfg.data.test_shifts.push_back(
              {synth::parse_shift(s.at("kind").get<std::string>()), s.at("magnitude").get<double>(), 0});
        }
      }
    }
    if (j.contains("arch")) {
      json a = arch_to_json(cfg.arch);
      a.update(j.at("arch"));
      cfg.arch = arch_from_json(a);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      auto& tc = cfg.train;
      read_if(t, "epochs", tc.epochs);
      read_if(t, "lr", tc.lr);
      read_if(t, "batch_size", tc.batch_size);
      read_if(t, "aux_weight", tc.aux_weight);
      read_if(t, "interpolation", tc.interpolation);
      read_if(t, "rotation", tc.rotation);
      read_if(t, "mae", tc.mae);
      read_if(t, "mask_patch", tc.mask_patch);
      read_if(t, "mask_ratio", tc.mask_ratio);
    }
    if (j.contains("ttt")) {
      const auto& t = j.at("ttt");
      auto& tc = cfg.ttt;
      read_if(t, "eta", tc.eta);
      read_if(t, "ttt_epochs", tc.ttt_epochs);
      read_if(t, "batch_size", tc.batch_size);
      if (t.contains("freeze")) {
        tc.freeze = {};
        for (const auto& name : t.at("freeze")) {
          tc.freeze[static_cast<std::size_t>(parse_partition(name.get<std::string>()))] = true;
        }
      }
      if (t.contains("optimizer")) {
        const auto name = t.at("optimizer").get<std::string>();
        if (name != "sgd" && name != "adam") throw ContractError("config: ttt.optimizer must be sgd or adam");
        tc.optimizer = name == "adam" ? Optimizer::adam : Optimizer::sgd;
      }
      read_if(t, "mask_patch", tc.mask_patch);
      read_if(t, "mask_ratio", tc.mask_ratio);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      if (e.contains("schemes")) {
        cfg.eval.schemes.clear();
        for (const auto& s : e.at("schemes")) cfg.eval.schemes.push_back(parse_scheme(s.get<std::string>()));
      }
      if (e.contains("tasks")) {
        cfg.eval.tasks.clear();
        for (const auto& t : e.at("tasks")) cfg.eval.tasks.push_back(parse_task(t.get<std::string>()));
      }
      read_if(e, "no_ttt", cfg.eval.include_no_ttt);
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  cfg.train.seed = cfg.seed;
  cfg.ttt.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const fs::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << to_json(cfg).dump(2) << '\n';
}

// ---- dataset ---------------------------------------------------------------

ExperimentPaths ExperimentPaths::under(const fs::path& root) {
  return {root / "data", root / "model", root / "results"};
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ContractError("output directory '" + dir.string() + "' is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::string sequence_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%03zu", index);
  return buf;
}

namespace {

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.vol", index);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

std::vector<synth::ShiftSpec> test_shifts(const ExperimentConfig& cfg, std::size_t index) {
  auto shifts = cfg.data.test_shifts;
  for (std::size_t k = 0; k < shifts.size(); ++k) shifts[k].seed = derive_seed(cfg.seed, {300, index, k});
  return shifts;
}

std::vector<fs::path> sequence_dirs(const fs::path& split) {
  if (!fs::is_directory(split)) throw FormatError("dataset directory '" + split.string() + "' is missing");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(split)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw FormatError("dataset directory '" + split.string() + "' holds no sequences");
  return dirs;
}

}  // namespace

synth::SequenceSpec sequence_spec(const ExperimentConfig& cfg, int split, std::size_t index) {
  auto spec = cfg.data.sequence;
  spec.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(100 + split), index});
  return spec;
}

void cmd_generate(const ExperimentConfig& cfg, const fs::path& data_dir, bool force) {
  cfg.validate();
  prepare_output_dir(data_dir, force);
  for (std::size_t i = 0; i < cfg.data.n_train; ++i) {
    const auto seq = synth::generate_sequence(sequence_spec(cfg, 0, i));
    const fs::path dir = data_dir / "train" / sequence_id(i);
    fs::create_directories(dir);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) synth::write_volume(dir / frame_name(f), seq.frames[f]);
    write_json(dir / "meta.json", {{"id", sequence_id(i)}, {"n_frames", seq.frames.size()}, {"seed", seq.spec.seed}});
  }
  for (std::size_t i = 0; i < cfg.data.n_test; ++i) {
    const auto shifts = test_shifts(cfg, i);
    auto seq = synth::generate_sequence(sequence_spec(cfg, 1, i));
    for (auto& f : seq.frames) f = synth::apply_shifts(f, shifts);
    const fs::path dir = data_dir / "test" / sequence_id(i);
    const fs::path labels = data_dir / "test_labels" / sequence_id(i);
    fs::create_directories(dir);
    fs::create_directories(labels);
    const std::size_t last = seq.frames.size() - 1;
    synth::write_volume(dir / frame_name(0), seq.frames.front());
    synth::write_volume(dir / frame_name(last), seq.frames.back());
    json times = json::array(), interior = json::array();
    for (std::size_t f = 1; f < last; ++f) {
      synth::write_volume(labels / frame_name(f), seq.frames[f]);
      times.push_back(seq.time_of(f));
      interior.push_back(f);
    }
    json shift_list = json::array();
    for (const auto& s : shifts) {
      auto j = shift_to_json(s);
      j["seed"] = s.seed;
      shift_list.push_back(std::move(j));
    }
    write_json(dir / "meta.json", {{"id", sequence_id(i)},
                                   {"n_frames", seq.frames.size()},
                                   {"seed", seq.spec.seed},
                                   {"shifts", shift_list},
                                   {"interior_frames", interior},
                                   {"times", times}});
  }
  save_config(data_dir / "config.json", cfg);
}

std::vector<TrainSequence> load_train_set(const fs::path& data_dir) {
  std::vector<TrainSequence> out;
  for (const auto& dir : sequence_dirs(data_dir / "train")) {
    const auto meta = read_json(dir / "meta.json");
    TrainSequence seq;
    const auto n = meta.at("n_frames").get<std::size_t>();
    for (std::size_t f = 0; f < n; ++f) seq.push_back(synth::read_volume(dir / frame_name(f)));
    out.push_back(std::move(seq));
  }
  return out;
}

TestSet load_test_inputs(const fs::path& data_dir) {
  TestSet set;
  for (const auto& dir : sequence_dirs(data_dir / "test")) {
    const auto meta = read_json(dir / "meta.json");
    const auto n = meta.at("n_frames").get<std::size_t>();
    set.items.push_back({meta.at("id").get<std::string>(), synth::read_volume(dir / frame_name(0)),
                         synth::read_volume(dir / frame_name(n - 1))});
    set.times.push_back(meta.at("times").get<std::vector<double>>());
  }
  return set;
}

std::vector<Tensor<float>> load_test_labels(const fs::path& data_dir, const ItemPrediction& item) {
  const auto meta = read_json(data_dir / "test" / item.item_id / "meta.json");
  const auto interior = meta.at("interior_frames").get<std::vector<std::size_t>>();
  if (interior.size() != item.times.size()) throw FormatError("label count mismatch for " + item.item_id);
  std::vector<Tensor<float>> frames;
  for (auto f : interior) frames.push_back(synth::read_volume(data_dir / "test_labels" / item.item_id / frame_name(f)));
  return frames;
}

// ---- train -----------------------------------------------------------------

void cmd_train(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& model_dir, bool force) {
  cfg.validate();
  const auto data = load_train_set(data_dir);
  for (const auto& seq : data) {
    if (seq.front().shape() != Shape(cfg.arch.volume.begin(), cfg.arch.volume.end())) {
      throw FormatError("training volume " + to_string(seq.front().shape()) + " does not match arch.volume");
    }
  }
  prepare_output_dir(model_dir, force);
  std::ofstream log(model_dir / "train_log.jsonl", std::ios::trunc);
  const auto params = train(init_params<float>(cfg.arch, cfg.seed), data, cfg.train, [&](const EpochStats& s) {
    log << json{{"epoch", s.epoch},
                {"loss", s.loss},
                {"interpolation", s.interpolation},
                {"rotation", s.rotation},
                {"mae", s.mae}}
               .dump()
        << '\n';
    log.flush();
  });
  save_checkpoint(model_dir / "checkpoint.bin", params);
  save_config(model_dir / "config.json", cfg);
}

// ---- adapt + evaluate ------------------------------------------------------

std::vector<CellSpec> evaluation_grid(const EvalConfig& eval) {
  std::vector<CellSpec> cells;
  if (eval.include_no_ttt) cells.push_back({false, Scheme::minibatch, Task::rotation});
  for (auto task : eval.tasks) {
    for (auto scheme : eval.schemes) cells.push_back({true, scheme, task});
  }
  return cells;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct CsvRow {
  std::string id;
  double t;
  std::string scheme, task;
  metrics::MetricReport report;
};

}  // namespace

bool cmd_adapt_eval(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& checkpoint,
                    const fs::path& results_dir, bool force) {
  cfg.validate();
  const auto theta0 = load_checkpoint(checkpoint, &cfg.arch);
  auto test = load_test_inputs(data_dir);
  prepare_output_dir(results_dir, force);
  save_config(results_dir / "config.json", cfg);

  const auto cells = evaluation_grid(cfg.eval);
  const auto stream = make_stream(test.items, cfg.ttt.batch_size);
  std::ofstream step_log(results_dir / "adaptation_log.jsonl", std::ios::trunc);
  std::vector<AdaptOutcome> outcomes;
  json adaptation = json::array(), timing = json::array();
  bool fell_back = false;
  for (const auto& cell : cells) {
    TTTConfig tc = cfg.ttt;
    tc.scheme = cell.scheme;
    tc.task = cell.task;
    outcomes.push_back(adapt_and_predict(theta0, stream, tc, test.times, cell.adapt, AdaptationLog{&step_log}));
    const auto& o = outcomes.back();
    json hashes = json::array();
    for (auto h : o.param_hashes) hashes.push_back(hex(h));
    adaptation.push_back({{"scheme", cell.scheme_label()},
                          {"task", cell.task_label()},
                          {"param_hashes", hashes},
                          {"steps", o.loss_trace.size()},
                          {"final_loss", o.loss_trace.empty() ? 0.0 : o.loss_trace.back()},
                          {"fell_back", o.fell_back},
                          {"failure", o.failure}});
    timing.push_back(
        {{"scheme", cell.scheme_label()}, {"task", cell.task_label()}, {"seconds_per_sample", o.seconds_per_sample}});
    fell_back = fell_back || o.fell_back;
  }
  write_json(results_dir / "adaptation.json", {{"cells", adaptation}});
  write_json(results_dir / "timing.json", {{"clock", "process-cpu"}, {"cells", timing}});

  // Ground truth is read only from here on.
  std::vector<CsvRow> rows;
  std::map<std::string, std::vector<Tensor<float>>> labels;
  auto load = [&](const ItemPrediction& p) {
    auto it = labels.find(p.item_id);
    if (it == labels.end()) it = labels.emplace(p.item_id, load_test_labels(data_dir, p)).first;
    return it->second;
  };
  for (std::size_t i = 0; i < test.items.size(); ++i) {
    const ItemPrediction probe{test.items[i].id, test.times[i], {}};
    const auto truth = load(probe);
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const auto blend = metrics::linear_blend_baseline(test.items[i].first, test.items[i].last, test.times[i][k]);
      rows.push_back({test.items[i].id, test.times[i][k], kLinearBlend, "none", metrics::evaluate(blend, truth[k])});
    }
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (const auto& f : score(outcomes[c], load)) {
      rows.push_back({f.item_id, f.t, cells[c].scheme_label(), cells[c].task_label(), f.report});
    }
  }

  std::ofstream csv(results_dir / "metrics.csv", std::ios::trunc);
  csv << "sequence_id,t,scheme,task,metric,value\n";
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> per_cell;
  std::vector<std::pair<std::string, std::string>> cell_order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.scheme, r.task);
    if (!per_cell.count(key)) cell_order.push_back(key);
    for (const char* m : metrics::kMetricNames) {
      const double v = metrics::metric_value(r.report, m);
      csv << r.id << ',' << format_double(r.t) << ',' << r.scheme << ',' << r.task << ',' << m << ','
          << format_double(v) << '\n';
      per_cell[key][m].push_back(v);
    }
  }
  json agg = json::array();
  for (const auto& key : cell_order) {
    json ms = json::object();
    for (const char* m : metrics::kMetricNames) {
      const auto s = metrics::summarize(per_cell[key][m]);
      ms[m] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
    }
    agg.push_back({{"scheme", key.first}, {"task", key.second}, {"metrics", ms}});
  }
  write_json(results_dir / "aggregate.json", {{"cells", agg}});
  return fell_back;
}

// ---- report ----------------------------------------------------------------

std::vector<ReportRow> cmd_report(const std::vector<fs::path>& result_dirs, std::ostream& table,
                                  const fs::path& csv_out) {
  if (result_dirs.empty()) throw FormatError("report: no result directories given");
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> run_means;
  std::vector<Key> order;
  for (const auto& dir : result_dirs) {
    const fs::path file = dir / "metrics.csv";
    std::ifstream in(file);
    if (!in) throw FormatError("report: '" + dir.string() + "' holds no metrics.csv");
    std::string line;
    std::getline(in, line);
    if (line != "sequence_id,t,scheme,task,metric,value") throw FormatError("report: bad header in " + file.string());
    std::map<Key, std::pair<double, std::size_t>> sums;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      if (f.size() != 6) throw FormatError("report: malformed row in " + file.string() + ": " + line);
      const Key key{f[2], f[3], f[4]};
      auto& s = sums[key];
      s.first += std::stod(f[5]);
      ++s.second;
    }
    if (sums.empty()) throw FormatError("report: " + file.string() + " has no rows");
    for (const auto& [key, s] : sums) {
      if (!run_means.count(key)) order.push_back(key);
      run_means[key].push_back(s.first / static_cast<double>(s.second));
    }
  }
  std::vector<ReportRow> rows;
  for (const auto& key : order) {
    const auto s = metrics::summarize(run_means[key]);
    rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), s.mean, s.std, s.count});
  }

  // Table: one line per (scheme, task), metrics as columns.
  table << std::left << std::setw(14) << "scheme" << std::setw(10) << "task";
  for (const char* m : metrics::kMetricNames) table << std::setw(22) << m;
  table << "runs\n";
  std::vector<std::pair<std::string, std::string>> cells;
  for (const auto& r : rows) {
    const auto c = std::make_pair(r.scheme, r.task);
    if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
  }
  for (const auto& c : cells) {
    table << std::setw(14) << c.first << std::setw(10) << c.second;
    std::size_t runs = 0;
    for (const char* m : metrics::kMetricNames) {
      std::ostringstream v;
      for (const auto& r : rows) {
        if (r.scheme == c.first && r.task == c.second && r.metric == m) {
          v << std::fixed << std::setprecision(4) << r.mean << " ±" << std::setprecision(4) << r.std;
          runs = r.runs;
        }
      }
      table << std::setw(22) << v.str();
    }
    table << runs << '\n';
  }

  if (!csv_out.empty()) {
    std::ofstream out(csv_out, std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + csv_out.string() + "'");
    out << "scheme,task,metric,mean,std,runs\n";
    for (const auto& r : rows) {
      out << r.scheme << ',' << r.task << ',' << r.metric << ',' << format_double(r.mean) << ','
          << format_double(r.std) << ',' << r.runs << '\n';
    }
  }
  return rows;
}

}  // namespace ttvi
