#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "subm/checks.hpp"
#include "subm/data.hpp"
#include "subm/net.hpp"
#include "subm/train.hpp"

namespace fs = std::filesystem;
using namespace subm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct DataSource {
  std::string root;
  std::string synthetic;  // strokes | surfaces
  int classes = 10;
  int per_class = 20;
  int extent = 0;  // 0: 64 for strokes, 30 for surfaces
};

void add_source_options(CLI::App* cmd, DataSource& src) {
  auto* data = cmd->add_option("--data", src.root, "dataset root (<root>/<split>/<label>/*.grid)");
  auto* syn = cmd->add_option("--synthetic", src.synthetic, "generate in memory instead")
                  ->check(CLI::IsMember({"strokes", "surfaces"}));
  data->excludes(syn);
  syn->excludes(data);
  cmd->add_option("--classes", src.classes, "synthetic classes");
  cmd->add_option("--per-class", src.per_class, "synthetic samples per class");
  cmd->add_option("--extent", src.extent, "synthetic grid extent");
}

Dataset load_source(const DataSource& src, const std::string& split, std::uint64_t seed) {
  if (!src.synthetic.empty()) {
    const std::uint64_t s = split == "train" ? seed : seed + 7919;
    if (src.synthetic == "strokes") {
      return gen_strokes(src.classes, src.per_class, src.extent ? src.extent : 64, s);
    }
    return gen_surfaces(src.classes, src.per_class, src.extent ? src.extent : 30, s);
  }
  if (src.root.empty()) throw CLI::ValidationError("--data or --synthetic is required");
  return load_dataset(src.root, split);
}

ConvMode parse_mode(const std::string& conv) {
  return conv == "sc" ? ConvMode::kFull : ConvMode::kSubmanifold;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os || !(os << text)) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
}

// --- gen -------------------------------------------------------------------

struct GenArgs {
  std::string kind = "strokes";
  int classes = 10;
  int train_per_class = 200;
  int test_per_class = 50;
  int extent = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  const int extent = a.extent ? a.extent : (a.kind == "strokes" ? 64 : 30);
  auto gen = [&](int per_class, std::uint64_t seed) {
    return a.kind == "strokes" ? gen_strokes(a.classes, per_class, extent, seed)
                               : gen_surfaces(a.classes, per_class, extent, seed);
  };
  Dataset train = gen(a.train_per_class, a.seed);
  Dataset test = gen(a.test_per_class, a.seed + 7919);
  save_dataset(train, a.out, "train");
  save_dataset(test, a.out, "test");
  std::cout << "wrote " << train.size() << " train and " << test.size() << " test samples to "
            << a.out << " (mean density " << std::setprecision(4)
            << 100.0 * mean_density(train) << "%)\n";
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string arch;
  DataSource src;
  std::uint64_t seed = 1;
  int epochs = 30;
  int batch = 100;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double decay = 0.95;
  std::string conv = "vsc";
  std::string out = "run";
};

int cmd_train(const TrainArgs& a) {
  NetworkPlan plan(load_arch_file(a.arch), a.seed);
  fs::create_directories(a.out);
  Dataset train = load_source(a.src, "train", a.seed);
  if (train.empty()) throw Error(ErrorCode::kEmptyDataset, "empty dataset");
  Dataset val = load_source(a.src, "test", a.seed);

  OptimizerState state({.lr = a.lr, .momentum = a.momentum, .weight_decay = a.weight_decay,
                        .decay = a.decay});
  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.batch = a.batch;
  opts.seed = a.seed;
  opts.mode = parse_mode(a.conv);
  opts.validation = val.empty() ? nullptr : &val;
  opts.on_epoch = [](const EpochStats& s) {
    std::cout << "epoch " << s.epoch << " lr " << s.lr << " loss " << s.train_loss << " train "
              << s.train_acc;
    if (s.val_acc >= 0) std::cout << " val " << s.val_acc;
    std::cout << " (" << s.wall_seconds << " s)\n";
    return true;
  };
  auto history = run_epochs(plan, train, state, opts);

  std::ofstream csv(fs::path(a.out) / "history.csv");
  write_history_csv(csv, history);
  save_checkpoint(plan, (fs::path(a.out) / "checkpoint.txt").string());
  std::cout << "checkpoint " << (fs::path(a.out) / "checkpoint.txt").string() << '\n';
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  DataSource src;
  std::string split = "test";
  std::uint64_t seed = 1;
  int batch = 100;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  NetworkPlan plan = load_checkpoint(a.checkpoint);
  Dataset ds = load_source(a.src, a.split, a.seed);
  if (ds.empty()) throw Error(ErrorCode::kEmptyDataset, "empty dataset");
  EvalResult r = evaluate(plan, ds, a.batch);
  std::ostringstream csv;
  csv << "true,predicted,count\n";
  std::cout << "accuracy " << r.accuracy << " loss " << r.loss << " samples " << ds.size() << '\n';
  std::cout << "confusion (rows true, columns predicted)\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    for (std::size_t p = 0; p < r.confusion[t].size(); ++p) {
      std::cout << std::setw(6) << r.confusion[t][p];
      csv << t << ',' << p << ',' << r.confusion[t][p] << '\n';
    }
    std::cout << '\n';
  }
  if (r.warnings) std::cout << r.warnings << " samples had no active site at the classifier\n";
  if (!a.out.empty()) write_file(a.out, csv.str());
  return kExitOk;
}

// --- cost ------------------------------------------------------------------

struct CostArgs {
  std::string arch;
  DataSource src;
  std::string split = "test";
  std::uint64_t seed = 1;
  std::string out;
};

struct Totals {
  double flops = 0, hidden = 0;
  bool available = true;
};

int cmd_cost(const CostArgs& a) {
  NetworkPlan plan(load_arch_file(a.arch), a.seed);
  Dataset ds = load_source(a.src, a.split, a.seed);
  if (ds.empty()) throw Error(ErrorCode::kEmptyDataset, "empty dataset");

  Totals vsc, sc, dense;
  std::vector<LedgerEntry> layers;
  for (const auto& s : ds.samples) {
    const Sample* one = &s;
    SparseGrid g = make_batch(std::span<const Sample* const>(&one, 1));
    ForwardResult r = plan.forward(g, {.mode = ConvMode::kSubmanifold});
    vsc.flops += static_cast<double>(r.ledger.total_flops());
    vsc.hidden += static_cast<double>(r.ledger.total_hidden());
    dense.flops += static_cast<double>(r.ledger.total_dense_flops());
    dense.hidden += static_cast<double>(r.ledger.total_dense_hidden());
    if (layers.empty()) {
      layers = r.ledger.entries;
    } else {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].flops += r.ledger.entries[i].flops;
        layers[i].hidden_states += r.ledger.entries[i].hidden_states;
      }
    }
    if (sc.available) {
      try {
        ForwardResult f = plan.forward(g, {.mode = ConvMode::kFull});
        sc.flops += static_cast<double>(f.ledger.total_flops());
        sc.hidden += static_cast<double>(f.ledger.total_hidden());
      } catch (const Error& e) {
        // Residual sums and concatenations need matching active sets, which
        // regular sparse convolutions do not preserve.
        if (e.code() != ErrorCode::kActiveSetMismatch) throw;
        sc.available = false;
      }
    }
  }
  const double n = static_cast<double>(ds.size());
  for (auto& l : layers) {
    l.flops = static_cast<std::int64_t>(std::llround(static_cast<double>(l.flops) / n));
    l.hidden_states = static_cast<std::int64_t>(std::llround(static_cast<double>(l.hidden_states) / n));
  }
  CostLedger mean_ledger{layers};

  std::cout << "per-layer mean (submanifold mode)\n";
  write_ledger_table(std::cout, mean_ledger);
  auto cell = [&](const Totals& t, double v, double unit) {
    std::ostringstream os;
    if (!t.available) {
      os << "n/a";
    } else {
      os << std::fixed << std::setprecision(2) << v / n / unit;
    }
    return os.str();
  };
  std::cout << "\nmean over " << ds.size() << " samples\n"
            << std::left << std::setw(20) << "" << std::right << std::setw(12) << "VSC"
            << std::setw(12) << "SC" << std::setw(12) << "C" << '\n'
            << std::left << std::setw(20) << "FLOPs (x10^6)" << std::right << std::setw(12)
            << cell(vsc, vsc.flops, 1e6) << std::setw(12) << cell(sc, sc.flops, 1e6)
            << std::setw(12) << cell(dense, dense.flops, 1e6) << '\n'
            << std::left << std::setw(20) << "Hidden (x10^3)" << std::right << std::setw(12)
            << cell(vsc, vsc.hidden, 1e3) << std::setw(12) << cell(sc, sc.hidden, 1e3)
            << std::setw(12) << cell(dense, dense.hidden, 1e3) << '\n';
  if (!sc.available) std::cout << "SC column unavailable: the network merges branches\n";

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ostringstream layers_csv, summary;
    write_ledger_csv(layers_csv, mean_ledger);
    summary << "mode,flops,hidden_states\n";
    auto row = [&](const char* name, const Totals& t) {
      summary << name << ',';
      if (t.available) summary << t.flops / n << ',' << t.hidden / n;
      else summary << "n/a,n/a";
      summary << '\n';
    };
    row("VSC", vsc);
    row("SC", sc);
    row("C", dense);
    write_file(fs::path(a.out) / "cost_layers.csv", layers_csv.str());
    write_file(fs::path(a.out) / "cost_summary.csv", summary.str());
  }
  return kExitOk;
}

// --- check -----------------------------------------------------------------

int cmd_check(std::uint64_t seed, const std::string& out) {
  auto results = checks::run_all(seed);
  bool ok = true;
  std::ostringstream csv;
  csv << "check,passed,seconds,detail\n";
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << r.name << ' '
              << r.detail << " (" << std::fixed << std::setprecision(2) << r.seconds << " s)\n";
    csv << r.name << ',' << (r.passed ? 1 : 0) << ',' << r.seconds << ",\"" << r.detail << "\"\n";
  }
  if (!out.empty()) write_file(out, csv.str());
  return ok ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse submanifold convolutional networks"};
  app.set_config("--config", "", "TOML file of option defaults; flags take precedence");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "write a synthetic dataset to disk");
  g->add_option("--kind", gen.kind)->check(CLI::IsMember({"strokes", "surfaces"}));
  g->add_option("--classes", gen.classes);
  g->add_option("--train-per-class", gen.train_per_class);
  g->add_option("--test-per-class", gen.test_per_class);
  g->add_option("--extent", gen.extent);
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out)->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a network and write history + checkpoint");
  t->add_option("--arch", tr.arch)->required();
  add_source_options(t, tr.src);
  t->add_option("--seed", tr.seed);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch", tr.batch);
  t->add_option("--lr", tr.lr);
  t->add_option("--momentum", tr.momentum);
  t->add_option("--weight-decay", tr.weight_decay);
  t->add_option("--decay", tr.decay, "lr multiplier per epoch");
  t->add_option("--conv", tr.conv, "vsc, or sc to run regular sparse convolutions")
      ->check(CLI::IsMember({"vsc", "sc"}));
  t->add_option("--out", tr.out);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "report accuracy and confusion counts");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  add_source_options(e, ev.src);
  e->add_option("--split", ev.split);
  e->add_option("--seed", ev.seed);
  e->add_option("--batch", ev.batch);
  e->add_option("--out", ev.out, "confusion CSV");

  CostArgs co;
  auto* c = app.add_subcommand("cost", "FLOPs and hidden states under VSC, SC and dense C");
  c->add_option("--arch", co.arch)->required();
  add_source_options(c, co.src);
  c->add_option("--split", co.split);
  c->add_option("--seed", co.seed);
  c->add_option("--out", co.out, "directory for CSV reports");

  std::uint64_t check_seed = 1;
  std::string check_out;
  auto* k = app.add_subcommand("check", "run the oracle and property suites");
  k->add_option("--seed", check_seed);
  k->add_option("--out", check_out, "CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*c) return cmd_cost(co);
    if (*k) return cmd_check(check_seed, check_out);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return err.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
