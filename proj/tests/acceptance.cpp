// Acceptance suite. Each criterion prints exactly one line
//   criterion N: PASS|FAIL  <details>
// on stdout; progress goes to stderr. The exit status is nonzero if any
// selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flow_oracle.hpp"
#include "ftfd/blas.hpp"
#include "ftfd/io/checkpoint.hpp"
#include "ftfd/io/manifest.hpp"
#include "ftfd/nn/attention.hpp"
#include "ftfd/nn/fusion.hpp"
#include "ftfd/nn/model.hpp"
#include "ftfd/synth/generator.hpp"
#include "ftfd/train/grad_check.hpp"
#include "ftfd/train/metrics.hpp"
#include "ftfd/train/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace ftfd;
using D = double;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<D> vec(const Tensor<D>& t) { return {t.data().begin(), t.data().end()}; }

Tensor<D> randn(Shape s, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<D> v(numel(s));
  for (auto& x : v) x = g(rng);
  return Tensor<D>::from(s, v);
}

void randomize(nn::ParamStore<D>& s, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto& [_, t] : s.params())
    for (auto& x : t.mutable_data()) x = g(rng);
}

// ------------------------------------------------------------------ 1

Verdict gradient_suite() {
  const auto r = train::grad_check(nn::ModelConfig{}, 1);
  const bool pass = r.finite && r.max_rel_error < 1e-4 && r.seconds < 120;
  return {pass, "miniature cmf+avam vam model: " + std::to_string(r.checked) + " entries, max rel error " + sci(r.max_rel_error) +
                    " at " + r.worst + ", " + num(r.seconds, 1) + " s"};
}

// ------------------------------------------------------------------ 2

Verdict transcription_oracles() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  double e_film = 0, e_cma = 0, e_kqv = 0, e_avam = 0, e_loss = 0;
  auto track = [](double& worst, const std::vector<D>& got, const std::vector<D>& want) {
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng), c1 = dim(rng), c2 = dim(rng);
    {
      nn::ParamStore<D> s(trial);
      const auto fm = randn({1, c2, h, w}, rng), fv = randn({1, c1, h, w}, rng);
      (void)nn::film(s, "f", fm, fv);
      randomize(s, rng);
      auto p = [&](const char* n) { return vec(s.params().at(std::string("f.") + n)); };
      track(e_film, vec(nn::film(s, "f", fm, fv)),
            oracle::film(vec(fm), c2, vec(fv), c1, h * w, p("gamma.weight"), p("gamma.bias"), p("beta.weight"), p("beta.bias")));
    }
    for (auto variant : {nn::CmaVariant::standard, nn::CmaVariant::kqv}) {
      nn::ParamStore<D> s(trial);
      const auto fvm = randn({1, c1, h, w}, rng), fa = randn({1, c1, h, w}, rng);
      (void)nn::cma(s, "c", fvm, fa, variant);
      randomize(s, rng);
      auto p = [&](const char* n) { return vec(s.params().at(std::string("c.") + n)); };
      const auto want = oracle::cma(vec(fvm), vec(fa), c1, h * w, p("k.weight"), p("k.bias"), p("q.weight"), p("q.bias"),
                                    p("v.weight"), p("v.bias"), variant == nn::CmaVariant::kqv);
      track(variant == nn::CmaVariant::kqv ? e_kqv : e_cma, vec(nn::cma(s, "c", fvm, fa, variant)), want);
    }
    {
      nn::ParamStore<D> s(trial);
      const auto fv = randn({1, c1, h, w}, rng), fa = randn({1, c2, h, w}, rng);
      (void)nn::avam_map(s, "a", fv, fa);
      randomize(s, rng);
      auto p = [&](const std::string& n) { return vec(s.params().at("a" + n)); };
      const oracle::AvamWeights aw{p(".avg.weight"), p(".max.weight"), p(".out.weight"), p(".avg.bias")[0], p(".max.bias")[0],
                                   p(".out.bias")[0]};
      track(e_avam, vec(nn::avam_map(s, "a", fv, fa)), oracle::avam_map(vec(fv), c1, vec(fa), c2, h, w, aw));
    }
    {
      const std::size_t n = dim(rng) * 3;
      std::normal_distribution<double> g(0, 4);
      std::vector<D> z(n), y(n);
      for (std::size_t i = 0; i < n; ++i) z[i] = g(rng), y[i] = double(rng() % 2);
      e_loss = std::max(e_loss, std::abs(nn::logloss(Tensor<D>::from({n}, z), y).item() - oracle::logloss(z, y)));
    }
  }
  const double worst = std::max({e_film, e_cma, e_kqv, e_avam, e_loss});
  return {worst < 1e-10, "100 random inputs each; max abs error film " + sci(e_film) + ", cma " + sci(e_cma) + ", cma-kqv " + sci(e_kqv) +
                             ", avam " + sci(e_avam) + ", logloss " + sci(e_loss)};
}

// ------------------------------------------------------------------ 3

Verdict shape_contract() {
  const nn::ModelConfig cfg;
  nn::FtfdNet<float> net(cfg, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  auto rand = [&](Shape s) {
    std::vector<float> v(numel(s));
    for (auto& x : v) x = g(rng);
    return Tensor<float>::from(s, v);
  };
  nn::ModelInputs<float> in;
  in.frames = rand({2, 12, 112, 112});
  in.flows = rand({2, 8, 112, 112});
  in.mfcc = rand({2, 1, 13, 16});
  // A fresh network has no running statistics; count those notices instead of printing each.
  std::size_t unit_stats = 0;
  const auto saved = warning_handler();
  warning_handler() = [&](std::string_view) { ++unit_stats; };
  NoGradGuard no_grad;
  const auto tr = net.trace(in, Mode::eval);
  warning_handler() = saved;
  bool ok = cfg.frames == 4 && cfg.input_size == 112 && cfg.channels == 3;
  std::string detail;
  for (const auto& [name, pyr] : {std::pair{"visual", &tr.visual}, {"motion", &tr.motion}, {"audio", &tr.audio}}) {
    const auto& b4 = (*pyr)[3].output.shape();
    const auto& b5 = (*pyr)[4].output.shape();
    ok = ok && b4 == Shape{2, 512, 7, 7} && b5 == Shape{2, 512, 3, 3};
    detail += std::string(name) + " b4 " + to_string(b4) + " b5 " + to_string(b5) + "; ";
  }
  ok = ok && tr.fused.shape() == Shape{2, 9216} && tr.logits.shape() == Shape{2} && nn::fused_length(cfg) == 9216;
  return {ok, detail + "fused " + to_string(tr.fused.shape()) + ", logits " + to_string(tr.logits.shape()) + " (one per sample); " +
                 std::to_string(unit_stats) + " untrained batch-norm layers used unit statistics"};
}

// ------------------------------------------------------------------ 4

Verdict flow_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = oracle::periodic_texture(112, 112, 5);
  const auto b = oracle::periodic_texture(112, 112, 5, 2.0, 1.0);
  const double epe = oracle::interior_epe(signal::farneback_flow(a, b), 2.0, 1.0);
  const auto still = signal::farneback_flow(a, a);
  double worst = 0;
  for (std::size_t y = 0; y < still.height; ++y)
    for (std::size_t x = 0; x < still.width; ++x) worst = std::max(worst, std::hypot(still.dx(y, x), still.dy(y, x)));
  const double secs = seconds_since(t0);
  return {epe < 0.5 && worst < 0.05 && secs < 10,
          "(2,1) translation interior EPE " + num(epe, 4) + " px; identical frames max " + sci(worst) + " px; " + num(secs, 2) +
              " s for both at 112x112"};
}

// ------------------------------------------------------------------ 5

Verdict metric_oracle() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(2, 80);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t exact = 0, with_ties = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = size(rng);
    const int levels = rep % 3 == 0 ? 0 : int(rng() % 8) + 1;  // 0: continuous scores
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = levels ? double(rng() % std::uint64_t(levels)) / levels : u(rng);
      y[i] = int(rng() % 2);
    }
    y[0] = 0, y[1] = 1;
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    with_ties += std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    exact += train::auc(s, y).value() == oracle::auc_pairs(s, y);
  }
  return {exact == 1000, std::to_string(exact) + "/1000 score sets equal the all-pairs statistic bit-for-bit (" +
                             std::to_string(with_ties) + " with ties)"};
}

// ------------------------------------------------------------- training

nn::ModelConfig bench_config(nn::Attention att, const std::string& modalities) {
  nn::ModelConfig c;
  c.input_size = 56;
  c.encoder.widths = {8, 16, 32, 32, 32};
  c.attention = att;
  c.modalities = nn::parse_modalities(modalities);
  c.validate();
  return c;
}

struct Bench {
  std::vector<nn::PreparedClip> train, val, test;
};

Bench load_bench(const fs::path& dir, synth::FakeMode mode) {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthSpec base;
  base.mode = mode;
  const auto m = synth::generate_dataset(200, 200, 7, dir, base);
  Bench b{train::load_split(m, io::Split::train, true), train::load_split(m, io::Split::val, true),
          train::load_split(m, io::Split::test, true)};
  std::cerr << "dataset " << synth::to_string(mode) << ": " << b.train.size() << "/" << b.val.size() << "/" << b.test.size() << " clips in "
            << num(seconds_since(t0), 1) << " s\n";
  return b;
}

struct RunOutcome {
  train::TrainResult<float> result;
  train::EvalResult test;
  double seconds = 0;
  std::vector<std::string> log;
};

RunOutcome train_and_test(const Bench& b, const nn::ModelConfig& cfg, std::uint64_t seed, std::size_t epochs, std::size_t patience = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  nn::FtfdNet<float> net(cfg, seed);
  train::TrainOptions opt;
  opt.epochs = epochs;
  opt.seed = seed;
  opt.patience = patience;
  opt.val.stride = 4;
  opt.on_epoch = [&](const train::EpochRecord& r) {
    out.log.push_back(r.to_json_line());
    std::cerr << "  " << r.to_json_line() << '\n';
  };
  out.result = train::fit(net, b.train, b.val, opt);
  out.test = train::evaluate(net, b.test);
  out.seconds = seconds_since(t0);
  std::cerr << "run " << nn::to_string(cfg.modalities) << "/" << nn::to_string(cfg.attention) << " seed " << seed << ": best epoch "
            << out.result.best_epoch << ", test acc " << num(out.test.acc, 2) << " auc " << num(out.test.auc.value_or(-1), 2)
            << " logloss " << num(out.test.logloss, 4) << " (" << num(out.seconds, 0) << " s)\n";
  return out;
}

// ------------------------------------------------------------------ 6

Verdict synthetic_target(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bench = load_bench(work / "data_both", synth::FakeMode::both);
  const auto run = train_and_test(bench, bench_config(nn::Attention::avam, "vam"), 1, 30);
  const double minutes = seconds_since(t0) / 60.0;
  fs::create_directories(work / "model");
  io::save_checkpoint((work / "model" / "model.ckpt").string(), run.result.best);
  std::ofstream log(work / "model" / "metrics.jsonl");
  for (const auto& l : run.log) log << l << '\n';
  const double auc = run.test.auc.value_or(0);
  return {run.test.acc >= 90 && auc >= 95 && minutes < 60,
          "56x56 cmf+avam T=4 batch 32: test ACC " + num(run.test.acc, 2) + ", AUC " + num(auc, 2) + ", LogLoss " +
              num(run.test.logloss, 4) + " after " + std::to_string(run.result.log.size()) + " epochs (best " +
              std::to_string(run.result.best_epoch) + "), " + num(minutes, 1) + " min"};
}

// ------------------------------------------------------------------ 7

Verdict directional_ablations(const fs::path& work) {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  auto mean_acc = [&](const Bench& b, const nn::ModelConfig& cfg, std::size_t epochs, std::size_t patience) {
    double sum = 0;
    for (auto s : seeds) sum += train_and_test(b, cfg, s, epochs, patience).test.acc;
    return sum / double(seeds.size());
  };
  using nn::Attention;
  double tri, av, v, vis, none, d_av, d_v;
  {
    const auto both = load_bench(work / "data_both", synth::FakeMode::both);
    tri = mean_acc(both, bench_config(Attention::avam, "vam"), 30, 0);
    av = mean_acc(both, bench_config(Attention::avam, "va"), 30, 0);
    v = mean_acc(both, bench_config(Attention::visual_only, "v"), 30, 0);
    vis = mean_acc(both, bench_config(Attention::visual_only, "vam"), 30, 0);
    none = mean_acc(both, bench_config(Attention::none, "vam"), 30, 0);
  }
  {
    const auto desync = load_bench(work / "data_desync", synth::FakeMode::desync);
    d_av = mean_acc(desync, bench_config(Attention::avam, "va"), 60, 0);
    d_v = mean_acc(desync, bench_config(Attention::visual_only, "v"), 60, 0);
  }
  // Ties within one point are not violations.
  const bool a = tri >= av - 1 && av >= v - 1;
  const bool b = tri >= vis - 1 && vis >= none - 1;
  const bool c = d_av - d_v >= 10;
  return {a && b && c, std::string("(a) ") + (a ? "ok" : "violated") + " vam " + num(tri, 2) + " va " + num(av, 2) + " v " + num(v, 2) +
                           "; (b) " + (b ? "ok" : "violated") + " avam " + num(tri, 2) + " visual " + num(vis, 2) + " none " +
                           num(none, 2) + "; (c) " + (c ? "ok" : "violated") + " desync va " + num(d_av, 2) + " v " + num(d_v, 2) +
                           " (mean test ACC over seeds 1-3)"};
}

// ------------------------------------------------------------------ 8

Verdict determinism(const fs::path& work) {
  const auto bench = load_bench(work / "data_both", synth::FakeMode::both);
  const auto cfg = bench_config(nn::Attention::avam, "vam");
  const auto r1 = train_and_test(bench, cfg, 11, 30);
  const auto r2 = train_and_test(bench, cfg, 11, 30);
  const bool logs = r1.log == r2.log;
  const bool weights = io::encode_checkpoint(r1.result.best) == io::encode_checkpoint(r2.result.best);
  const char* cap = std::getenv("FTFD_THREADS");
  return {logs && weights && !r1.log.empty(), std::to_string(r1.log.size()) + "-epoch metric logs " + (logs ? "identical" : "differ") +
                                                  ", best checkpoints " + (weights ? "byte-identical" : "differ") +
                                                  " (FTFD_THREADS=" + (cap ? cap : "unset") + ")"};
}

// ------------------------------------------------------------------ 9

Verdict format_suite(const fs::path& work) {
  std::mt19937_64 rng(9);
  std::vector<std::string> failures;
  std::size_t roundtrips = 0;
  for (int rep = 0; rep < 50; ++rep) {
    Shape shape;
    for (std::size_t r = rng() % 4; r > 0; --r) shape.push_back(1 + rng() % 5);
    const auto t = randn(shape, rng);
    const auto bytes = io::encode_tensor(t);
    const auto back = io::decode_tensor<D>(bytes);
    const auto tf = Tensor<float>::from(shape, std::vector<float>(t.data().begin(), t.data().end()));
    const auto backf = io::decode_tensor<float>(io::encode_tensor(tf));
    if (back.shape() != t.shape() || std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(D)) != 0 ||
        io::encode_tensor(back) != bytes || backf.values() != tf.values()) {
      failures.push_back("container roundtrip " + to_string(shape));
    }
    ++roundtrips;
  }

  nn::ModelConfig small;
  small.frames = 2;
  small.input_size = 32;
  small.encoder.widths = {4, 8};
  small.encoder.convs = {1, 1};
  small.classifier = {8, 4};
  nn::FtfdNet<float> net(small, 4);
  const auto ck = net.checkpoint(77);
  fs::create_directories(work);
  const auto p1 = (work / "a.ckpt").string(), p2 = (work / "b.ckpt").string();
  io::save_checkpoint(p1, ck);
  io::save_checkpoint(p2, io::load_checkpoint<float>(p1, net.config_json()));
  const auto archive = io::read_file(p1);
  if (archive != io::read_file(p2)) failures.push_back("checkpoint save-load-save differs");

  std::size_t corrupt = 0, caught = 0;
  for (std::size_t i = 0; i < archive.size(); ++i)
    for (int flip : {0x01, 0x80}) {
      std::string bad = archive;
      bad[i] = char(bad[i] ^ flip);
      ++corrupt;
      try {
        (void)io::decode_checkpoint<float>(bad);
      } catch (const io::FormatError&) {
        ++caught;
      }
    }
  const std::string container = io::encode_tensor(randn({3, 4}, rng));
  for (std::size_t i = 0; i < 4 + 3 + 2 * 4; ++i)
    for (int flip : {0x01, 0x80}) {
      std::string bad = container;
      bad[i] = char(bad[i] ^ flip);
      ++corrupt;
      try {
        (void)io::decode_tensor<D>(bad);
      } catch (const io::FormatError&) {
        ++caught;
      }
    }
  if (caught != corrupt) failures.push_back(std::to_string(corrupt - caught) + " corruptions undetected");

  const std::string good = "a\ta\ta.wav\t0\ttrain\n";
  const std::vector<std::pair<std::string, std::string>> bad_lines{{"b\tb\tb.wav\t2\ttrain", "label"},
                                                                   {"b\tb\tb.wav\t1\tholdout", "split"},
                                                                   {"b\tb\tb.wav\t1", "5 TAB-separated"},
                                                                   {"a\ta\ta.wav\t1\tval", "duplicate"}};
  std::size_t named = 0;
  for (const auto& [line, what] : bad_lines) {
    std::istringstream in("# header\n" + good + "\n" + line + "\n");
    try {
      (void)io::parse_manifest(in, work, "m.tsv", false);
    } catch (const io::ManifestError& e) {
      if (std::string(e.what()).find("m.tsv:4:") != std::string::npos && std::string(e.what()).find(what) != std::string::npos) ++named;
    }
  }
  if (named != bad_lines.size()) failures.push_back("manifest errors without line numbers");

  std::string detail = std::to_string(roundtrips) + " container roundtrips bit-exact, checkpoint " + std::to_string(archive.size()) +
                       " bytes save-load-save identical, " + std::to_string(caught) + "/" + std::to_string(corrupt) +
                       " single-byte corruptions detected, " + std::to_string(named) + "/" + std::to_string(bad_lines.size()) +
                       " malformed manifest lines reported with line number";
  for (const auto& f : failures) detail += "; FAILED: " + f;
  return {failures.empty(), detail};
}

// ------------------------------------------------------- trained-model properties

Verdict trained_properties(const fs::path& work) {
  const auto ck = io::load_checkpoint<float>((work / "model" / "model.ckpt").string());
  std::vector<double> losses;
  {
    std::ifstream log(work / "model" / "metrics.jsonl");
    for (std::string line; std::getline(log, line);) losses.push_back(nlohmann::json::parse(line).at("train_loss").get<double>());
  }
  bool monotone = losses.size() >= 3;
  for (std::size_t e = 1; e < 3 && e < losses.size(); ++e) monotone = monotone && losses[e] <= losses[e - 1] * 1.05;

  nn::FtfdNet<float> net(nn::model_config_from_json(nlohmann::json::parse(ck.config)));
  net.load(ck);
  const auto& cfg = net.config();
  synth::SynthSpec spec;
  const auto lip = spec.lip_region();
  const auto m = io::load_manifest((work / "data_both" / "manifest.tsv").string());
  double lip_sum = 0, off_sum = 0;
  std::size_t blocks_favoring_lip = 0, block_count = 0;
  std::vector<double> lip_mean(cfg.encoder.blocks(), 0), off_mean(cfg.encoder.blocks(), 0);
  std::size_t clips = 0;
  for (const auto& rec : m.of(io::Split::test)) {
    if (rec.label != 1) continue;
    const auto c = nn::prepare_clip(io::load_clip(rec), true);
    NoGradGuard no_grad;
    std::vector<nn::WindowRef> windows;
    for (std::size_t s = 0; s < c.num_windows(cfg.frames); s += 4) windows.push_back({&c, s});
    const auto tr = net.trace(nn::assemble_batch<float>(cfg, windows), Mode::eval);
    for (std::size_t b = 0; b < tr.visual.size(); ++b) {
      const auto& map = tr.visual[b].map;
      const std::size_t n = map.dim(0), h = map.dim(2), w = map.dim(3);
      const double sy = double(h) / double(spec.size), sx = double(w) / double(spec.size);
      const auto y0 = std::size_t(std::floor(lip.y * sy)), y1 = std::size_t(std::ceil((lip.y + lip.h) * sy));
      const auto x0 = std::size_t(std::floor(lip.x * sx)), x1 = std::size_t(std::ceil((lip.x + lip.w) * sx));
      double in = 0, out = 0;
      std::size_t n_in = 0, n_out = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const double v = map[(i * h + y) * w + x];
            if (y >= y0 && y < y1 && x >= x0 && x < x1) in += v, ++n_in;
            else out += v, ++n_out;
          }
      if (n_in && n_out) lip_mean[b] += in / double(n_in), off_mean[b] += out / double(n_out);
    }
    ++clips;
  }
  std::string per_block;
  for (std::size_t b = 0; b < lip_mean.size(); ++b) {
    lip_mean[b] /= double(clips);
    off_mean[b] /= double(clips);
    lip_sum += lip_mean[b];
    off_sum += off_mean[b];
    ++block_count;
    blocks_favoring_lip += lip_mean[b] > off_mean[b];
    per_block += " b" + std::to_string(b + 1) + " " + num(lip_mean[b], 3) + "/" + num(off_mean[b], 3);
  }
  const bool focus = lip_sum > off_sum;
  std::string losses_str;
  for (std::size_t e = 0; e < 3 && e < losses.size(); ++e) losses_str += (e ? " " : "") + num(losses[e], 4);
  return {monotone && focus, std::string("train loss epochs 1-3 ") + losses_str + (monotone ? " (non-increasing within 5%)" : " (NOT monotone)") +
                                 "; AVAM map lip/off-lip mean on " + std::to_string(clips) + " fake test clips:" + per_block + " (" +
                                 std::to_string(blocks_favoring_lip) + "/" + std::to_string(block_count) + " blocks favour lips)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> which;
  std::string workdir = "acceptance_work";
  bool properties = false;
  app.add_option("--criterion", which, "criteria to run (1-9); default all")->check(CLI::Range(1, 9));
  app.add_flag("--trained-properties", properties, "check properties of the model saved by criterion 6");
  app.add_option("--workdir", workdir, "scratch directory for datasets and checkpoints");
  CLI11_PARSE(app, argc, argv);
  apply_thread_cap();
  if (which.empty() && !properties) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const fs::path work(workdir);

  const std::vector<std::function<Verdict()>> criteria{
      gradient_suite,
      transcription_oracles,
      shape_contract,
      flow_oracle,
      metric_oracle,
      [&] { return synthetic_target(work / "c6"); },
      [&] { return directional_ablations(work / "c7"); },
      [&] { return determinism(work / "c8"); },
      [&] { return format_suite(work / "c9"); },
  };
  bool all = true;
  auto report = [&](const std::string& label, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::cout << label << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
    all = all && v.pass;
  };
  for (int c : which) report("criterion " + std::to_string(c), criteria[std::size_t(c - 1)]);
  if (properties) report("trained-model properties", [&] { return trained_properties(work / "c6"); });
  return all ? 0 : 1;
}
