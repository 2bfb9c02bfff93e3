#include "rmtopo/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rmtopo/errors.hpp"
#include "rmtopo/metrics.hpp"
#include "rmtopo/trainer.hpp"

namespace rmtopo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kNetworkStream = 13;
constexpr std::uint64_t kEvalNoise = 0xe7a1;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  return os;
}

void write_json(const std::string& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

json ledger_json(const LedgerCounts& c) {
  return {{"resets", c.resets},
          {"sets", c.sets},
          {"forms", c.forms},
          {"writes", c.writes},
          {"write_pulses", c.write_pulses},
          {"programming_operations", c.programming_operations()}};
}

json array_json(const CrossbarArray& a) {
  std::vector<int> states(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) states[i] = static_cast<int>(a.states()[i]);
  return {{"state", states}, {"g_us", a.conductances()}};
}

void restore_array(CrossbarArray& a, const json& j) {
  const auto states = j.at("state").get<std::vector<int>>();
  std::vector<CellState> cs(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] < 0 || states[i] > 2) throw ParseError("snapshot: invalid cell state");
    cs[i] = static_cast<CellState>(states[i]);
  }
  a.restore(std::move(cs), j.at("g_us").get<std::vector<double>>());
}

json hardware_json(const HardwareOptions& h) {
  return {{"bits", h.bits},         {"input_lo", h.input_lo},       {"input_hi", h.input_hi},
          {"v_read", h.v_read},     {"adc_bits", h.adc_bits},       {"weight_gain", h.weight_gain},
          {"keep_fraction", h.keep_fraction}};
}

HardwareOptions hardware_from_json(const json& j) {
  HardwareOptions h;
  h.bits = j.at("bits").get<int>();
  h.input_lo = j.at("input_lo").get<double>();
  h.input_hi = j.at("input_hi").get<double>();
  h.v_read = j.at("v_read").get<double>();
  h.adc_bits = j.at("adc_bits").get<int>();
  h.weight_gain = j.at("weight_gain").get<double>();
  h.keep_fraction = j.at("keep_fraction").get<double>();
  return h;
}

std::vector<double> pair_differences(const json& snap) {
  std::vector<double> d;
  for (const json& s : snap.at("slots")) {
    const auto gp = s.at("g_plus").at("g_us").get<std::vector<double>>();
    const auto gm = s.at("g_minus").at("g_us").get<std::vector<double>>();
    if (gp.size() != gm.size()) throw ParseError("snapshot: G+/G- size mismatch in " + s.at("name").get<std::string>());
    for (std::size_t i = 0; i < gp.size(); ++i) d.push_back(gp[i] - gm[i]);
  }
  return d;
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
  std::ofstream os = open_out(path);
  os << "bin_lo_us,bin_hi_us,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    os << num(h.lo + b * h.width()) << ',' << num(h.lo + (b + 1) * h.width()) << ',' << h.counts[b]
       << '\n';
}

json modes_json(const Histogram& h, std::size_t n) {
  json modes = json::array();
  for (const Mode& m : find_modes(h)) modes.push_back({{"center_us", m.center}, {"peak_count", m.peak_count}});
  return {{"n", n}, {"modes", modes}};
}

}  // namespace

std::uint64_t network_seed(std::uint64_t run_seed) { return derive_seed(run_seed, kNetworkStream); }

HardwareNetwork make_network(const RunConfig& cfg, bool dense) {
  HardwareOptions hw = cfg.hardware;
  if (dense) hw.keep_fraction = 1.0;
  return HardwareNetwork(cfg.network, cfg.device, network_seed(cfg.seed), hw);
}

json snapshot_to_json(const HardwareNetwork& net, const std::string& method) {
  json slots = json::array();
  for (const ScoredLayer& s : net.slots()) {
    std::vector<int> mask(s.mask.begin(), s.mask.end());
    slots.push_back({{"name", s.name},
                     {"rows", s.rows()},
                     {"cols", s.cols()},
                     {"beta", s.bank.beta},
                     {"g_plus", array_json(s.bank.g_plus)},
                     {"g_minus", array_json(s.bank.g_minus)},
                     {"weights", s.weights},
                     {"scores", s.scores},
                     {"mask", mask},
                     {"sparsity", s.sparsity}});
  }
  return {{"method", method},
          {"formed", net.formed()},
          {"network", net.spec()},
          {"hardware", hardware_json(net.options())},
          {"slots", slots}};
}

HardwareNetwork network_from_snapshot(const json& snap, const DeviceSpec& device) {
  try {
    HardwareNetwork net(snap.at("network").get<NetworkSpec>(), device, 0,
                        hardware_from_json(snap.at("hardware")));
    const json& slots = snap.at("slots");
    if (slots.size() != net.slots().size()) throw ParseError("snapshot: slot count does not match network");
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const json& j = slots[k];
      ScoredLayer& s = net.slots()[k];
      if (j.at("rows").get<int>() != s.rows() || j.at("cols").get<int>() != s.cols())
        throw ParseError("snapshot: bank shape mismatch in " + s.name);
      s.bank.beta = j.at("beta").get<double>();
      restore_array(s.bank.g_plus, j.at("g_plus"));
      restore_array(s.bank.g_minus, j.at("g_minus"));
      s.weights = j.at("weights").get<std::vector<double>>();
      s.scores = j.at("scores").get<std::vector<double>>();
      const auto mask = j.at("mask").get<std::vector<int>>();
      s.mask.assign(mask.begin(), mask.end());
      s.sparsity = j.at("sparsity").get<double>();
    }
    if (snap.at("formed").get<bool>()) net.mark_formed();
    net.refresh_stored_weights();
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("snapshot: ") + e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

json weight_mode_summary(const HardwareNetwork& net) {
  struct Acc {
    std::size_t n = 0;
    double w = 0, w2 = 0, d = 0, d2 = 0;
  };
  Acc acc[3];  // positive, negative, zero
  for (const ScoredLayer& s : net.slots())
    for (int r = 0; r < s.rows(); ++r)
      for (int c = 0; c < s.cols(); ++c) {
        const bool pos = s.bank.g_plus.state(r, c) == CellState::Formed;
        const bool neg = s.bank.g_minus.state(r, c) == CellState::Formed;
        Acc& a = acc[pos ? 0 : neg ? 1 : 2];
        const double d = s.bank.g_plus.conductance(r, c) - s.bank.g_minus.conductance(r, c);
        const double w = s.bank.beta * d;
        a.n += 1;
        a.w += w;
        a.w2 += w * w;
        a.d += d;
        a.d2 += d * d;
      }
  const char* names[3] = {"positive", "negative", "zero"};
  json out;
  for (int m = 0; m < 3; ++m) {
    const Acc& a = acc[m];
    const double n = static_cast<double>(std::max<std::size_t>(a.n, 1));
    const double wm = a.w / n, dm = a.d / n;
    out[names[m]] = {{"count", a.n},
                     {"weight_mean", wm},
                     {"weight_std", std::sqrt(std::max(0.0, a.w2 / n - wm * wm))},
                     {"diff_mean_us", dm},
                     {"diff_std_us", std::sqrt(std::max(0.0, a.d2 / n - dm * dm))}};
  }
  return out;
}

void write_report_csv(const std::string& path, const TrainReport& report) {
  std::ofstream os = open_out(path);
  os << "epoch,train_acc,val_acc,test_acc,loss,resets,sets,writes,write_pulses,fwd_energy_uJ,threshold\n";
  for (const EpochRow& r : report.rows)
    os << r.epoch << ',' << num(r.train_acc) << ',' << num(r.val_acc) << ',' << num(r.test_acc)
       << ',' << num(r.loss) << ',' << r.cumulative.resets << ',' << r.cumulative.sets << ','
       << r.cumulative.writes << ',' << r.cumulative.write_pulses << ',' << num(r.fwd_energy_uj)
       << ',' << num(r.threshold) << '\n';
}

void run_form(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  HardwareNetwork net = make_network(cfg, false);
  const std::size_t formed = net.form();
  json slots = json::array();
  for (const ScoredLayer& s : net.slots()) {
    save_grid_csv(join(out_dir, s.name + ".gplus.csv"), s.rows(), s.cols(), s.bank.g_plus.conductances());
    save_grid_csv(join(out_dir, s.name + ".gminus.csv"), s.rows(), s.cols(), s.bank.g_minus.conductances());
    slots.push_back({{"name", s.name},
                     {"rows", s.rows()},
                     {"cols", s.cols()},
                     {"beta", s.bank.beta},
                     {"g_plus_pristine", s.bank.g_plus.count(CellState::Pristine)},
                     {"g_minus_pristine", s.bank.g_minus.count(CellState::Pristine)}});
  }
  write_json(join(out_dir, "snapshot.json"), snapshot_to_json(net, "formed"));
  write_json(join(out_dir, "form_summary.json"), {{"seed", cfg.seed},
                                                  {"network", cfg.network.name},
                                                  {"formed_cells", formed},
                                                  {"modes", weight_mode_summary(net)},
                                                  {"slots", slots}});
}

void run_train(const RunConfig& cfg, Method method, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Splits sp = load_splits(cfg);
  HardwareNetwork net = make_network(cfg, method == Method::Weights);
  net.form();
  const std::string tag = method == Method::Topology ? "TO" : "WO";
  write_json(join(out_dir, "snapshot_initial.json"), snapshot_to_json(net, tag));

  const TrainOptions opt = train_options(cfg);
  const TrainReport report = method == Method::Topology
                                 ? train_topology(net, sp.train, sp.val, sp.test, opt)
                                 : train_weights_baseline(net, sp.train, sp.val, sp.test, opt);

  write_report_csv(join(out_dir, "report.csv"), report);
  write_json(join(out_dir, "snapshot.json"), snapshot_to_json(net, report.method));
  {
    std::ofstream os = open_out(join(out_dir, "ledger.csv"));
    os << "layer,resets,sets,forms,writes,write_pulses\n";
    for (const auto& [name, c] : report.ledger.layers())
      os << name << ',' << c.resets << ',' << c.sets << ',' << c.forms << ',' << c.writes << ','
         << c.write_pulses << '\n';
  }
  if (method == Method::Topology)
    for (const ScoredLayer& s : net.slots()) {
      save_grid_csv(join(out_dir, s.name + ".scores.csv"), s.rows(), s.cols(), s.scores);
      save_grid_csv(join(out_dir, s.name + ".mask.csv"), s.rows(), s.cols(),
                    std::vector<double>(s.mask.begin(), s.mask.end()));
    }

  const EpochRow last = report.rows.empty() ? EpochRow{} : report.rows.back();
  json layers = json::object();
  for (const auto& [name, c] : report.ledger.layers()) layers[name] = ledger_json(c);
  json ledger = ledger_json(report.ledger.total());
  ledger["layers"] = layers;
  json pruned = json::object();
  for (const ScoredLayer& s : net.slots()) pruned[s.name] = {{"pruned", s.pruned_count()}, {"size", s.size()}};
  json summary = {{"method", report.method},
                  {"seed", cfg.seed},
                  {"network", cfg.network.name},
                  {"scale", cfg.network.scale},
                  {"epochs", opt.epochs},
                  {"training_rows", opt.epochs},
                  {"final",
                   {{"train_acc", last.train_acc},
                    {"val_acc", last.val_acc},
                    {"test_acc", last.test_acc},
                    {"loss", last.loss}}},
                  {"ledger", ledger},
                  {"write_pulses", report.ledger.total().write_pulses},
                  {"energy",
                   {{"programming_uj", programming_energy(report.ledger, cfg.energy)},
                    {"forward_uj_per_sample", last.fwd_energy_uj}}},
                  {"pruning", pruned},
                  {"threshold", last.threshold}};
  if (method == Method::Weights) {
    summary["wo_mode"] = to_string(opt.mode);
    summary["t_w"] = report.t_w;
  }
  write_json(join(out_dir, "summary.json"), summary);
}

void run_eval(const RunConfig& cfg, const std::string& snapshot_dir, const std::string& out_dir) {
  const json snap = read_json_file(join(snapshot_dir, "snapshot.json"));
  const HardwareNetwork net = network_from_snapshot(snap, cfg.device);
  if (!net.formed()) throw StateError("eval: snapshot holds unformed banks");
  const Splits sp = load_splits(cfg);
  if (sp.test.size() == 0) throw ConfigError("eval: dataset.test must be positive");
  ensure_dir(out_dir);
  const Evaluation ev = evaluate(net, sp.test, derive_seed(cfg.seed, kEvalNoise), &cfg.energy,
                                 effective_workers(cfg.workers));
  const int classes = net.classes();
  const auto cm = confusion_matrix(ev.predictions, sp.test.labels, classes);
  {
    std::ofstream os = open_out(join(out_dir, "confusion.csv"));
    os << "truth\\pred";
    for (int c = 0; c < classes; ++c) os << ',' << c;
    os << '\n';
    for (int t = 0; t < classes; ++t) {
      os << t;
      for (int c = 0; c < classes; ++c) os << ',' << cm[t][c];
      os << '\n';
    }
  }
  json per_class = json::array();
  for (int c = 0; c < classes; ++c) {
    std::vector<std::uint8_t> p(ev.predictions.size()), t(ev.predictions.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = ev.predictions[i] == c;
      t[i] = sp.test.labels[i] == c;
    }
    const ConfusionCounts cc = confusion(p, t);
    per_class.push_back({{"class", c},
                         {"support", cc.tp + cc.fn},
                         {"precision", precision(cc).value},
                         {"recall", tpr_recall(cc).value},
                         {"f1", f1(cc).value}});
  }
  json metrics = {{"accuracy", ev.accuracy},
                  {"n", sp.test.size()},
                  {"classes", classes},
                  {"mean_forward_energy_uj", ev.mean_energy_uj},
                  {"confusion", cm},
                  {"per_class", per_class}};
  if (classes == 2) {
    std::vector<double> prob(ev.probabilities.size());
    std::vector<std::uint8_t> truth(prob.size());
    for (std::size_t i = 0; i < prob.size(); ++i) {
      prob[i] = std::clamp(ev.probabilities[i][1], 0.0, 1.0);
      truth[i] = sp.test.labels[i] == 1;
    }
    const Curves cv = roc_pr_curves(prob, truth);
    metrics["auc_roc"] = cv.auc_roc;
    metrics["auc_pr"] = cv.auc_pr;
    for (const auto& [file, pts] : {std::pair{"roc.csv", &cv.roc}, std::pair{"pr.csv", &cv.pr}}) {
      std::ofstream os = open_out(join(out_dir, file));
      os << "threshold,x,y\n";
      for (const CurvePoint& p : *pts) os << num(p.threshold) << ',' << num(p.x) << ',' << num(p.y) << '\n';
    }
  }
  write_json(join(out_dir, "metrics.json"), metrics);
}

void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");
  std::vector<json> runs;
  for (const std::string& d : run_dirs) runs.push_back(read_json_file(join(d, "summary.json")));
  ensure_dir(out_dir);
  json rows = json::array();
  {
    std::ofstream os = open_out(join(out_dir, "report.csv"));
    os << "run,method,seed,test_acc,programming_operations,write_pulses,programming_energy_uJ,fwd_energy_uJ\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const json& r = runs[i];
      const std::string name = fs::path(run_dirs[i]).filename().string();
      os << name << ',' << r.at("method").get<std::string>() << ',' << r.at("seed").get<std::uint64_t>()
         << ',' << num(r.at("final").at("test_acc").get<double>()) << ','
         << r.at("ledger").at("programming_operations").get<std::uint64_t>() << ','
         << r.at("write_pulses").get<std::uint64_t>() << ','
         << num(r.at("energy").at("programming_uj").get<double>()) << ','
         << num(r.at("energy").at("forward_uj_per_sample").get<double>()) << '\n';
      rows.push_back({{"run", name},
                      {"method", r.at("method")},
                      {"test_acc", r.at("final").at("test_acc")},
                      {"programming_operations", r.at("ledger").at("programming_operations")}});
    }
  }
  json out = {{"runs", rows}};
  const json* to = nullptr;
  const json* wo = nullptr;
  for (const json& r : runs) {
    if (!to && r.at("method") == "TO") to = &r;
    if (!wo && r.at("method") == "WO-free") wo = &r;
  }
  if (to && wo) {
    const double ops_to = to->at("ledger").at("programming_operations").get<double>();
    const double ops_wo = wo->at("ledger").at("programming_operations").get<double>();
    const double e_to = to->at("energy").at("forward_uj_per_sample").get<double>();
    const double e_wo = wo->at("energy").at("forward_uj_per_sample").get<double>();
    out["comparison"] = {
        {"programming_ratio", ops_wo > 0 ? ops_to / ops_wo : 0.0},
        {"programming_reduction", ops_wo > 0 ? 1.0 - ops_to / ops_wo : 0.0},
        {"forward_energy_reduction", e_wo > 0 ? 1.0 - e_to / e_wo : 0.0},
        {"accuracy_difference",
         to->at("final").at("test_acc").get<double>() - wo->at("final").at("test_acc").get<double>()}};
  }
  write_json(join(out_dir, "report.json"), out);
}

void run_export_dist(const std::string& bank_dir, int bins, const std::string& out_dir) {
  if (bins < 1) throw ConfigError("export-dist: bins must be >= 1");
  const json after = read_json_file(join(bank_dir, "snapshot.json"));
  const std::string initial_path = join(bank_dir, "snapshot_initial.json");
  const bool has_before = fs::exists(initial_path);
  const json before = has_before ? read_json_file(initial_path) : json();

  const std::vector<double> d_after = pair_differences(after);
  const std::vector<double> d_before = has_before ? pair_differences(before) : std::vector<double>{};
  double m = 0.0;
  for (double v : d_after) m = std::max(m, std::abs(v));
  for (double v : d_before) m = std::max(m, std::abs(v));
  if (m == 0.0) m = 1.0;

  ensure_dir(out_dir);
  const Histogram h_after = histogram(d_after, bins, -m, m);
  write_histogram_csv(join(out_dir, "hist_after.csv"), h_after);
  json summary = {{"bins", bins}, {"range_us", {-m, m}}, {"after", modes_json(h_after, d_after.size())}};
  if (has_before) {
    const Histogram h_before = histogram(d_before, bins, -m, m);
    write_histogram_csv(join(out_dir, "hist_before.csv"), h_before);
    summary["before"] = modes_json(h_before, d_before.size());
  }
  write_json(join(out_dir, "dist_summary.json"), summary);
}

}  // namespace rmtopo
