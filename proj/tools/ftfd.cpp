// ftfd: data synthesis, training, evaluation, inference and inspection.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ftfd/blas.hpp"
#include "ftfd/io/checkpoint.hpp"
#include "ftfd/io/clip.hpp"
#include "ftfd/io/manifest.hpp"
#include "ftfd/nn/model.hpp"
#include "ftfd/signal/prep.hpp"
#include "ftfd/synth/generator.hpp"
#include "ftfd/train/grad_check.hpp"
#include "ftfd/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ftfd;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<std::size_t> parse_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(std::size_t(v));
    } catch (const std::exception&) {
      throw UsageError(std::string("--") + what + ": '" + s + "' is not a comma-separated list of positive integers");
    }
  }
  if (out.empty()) throw UsageError(std::string("--") + what + " is empty");
  return out;
}

io::Split parse_split(const std::string& s) {
  if (s == "train") return io::Split::train;
  if (s == "val") return io::Split::val;
  if (s == "test") return io::Split::test;
  throw UsageError("unknown split '" + s + "' (expected train, val, test)");
}

void print_config(const std::string& command, json j) {
  j["command"] = command;
  j["threads"] = std::getenv("FTFD_THREADS") ? std::getenv("FTFD_THREADS") : "host";
  std::cerr << "config: " << j.dump() << '\n';
}

struct ModelFlags {
  std::size_t frames = 4;
  std::size_t input_size = 112;
  std::string fusion = "cmf";
  std::string attention = "avam";
  std::string modalities = "vam";
  std::string widths = "64,128,256,512,512";
  std::string convs = "2,2,3,3,3";
  std::string classifier = "512,128";
  double dropout = 0.5;

  void add(CLI::App* app) {
    app->add_option("--frames", frames, "frame buffer T");
    app->add_option("--input-size", input_size, "square face crop size in pixels");
    app->add_option("--fusion", fusion, "fusion strategy")->check(CLI::IsMember({"cmf", "concat", "sum", "cmf-kqv", "cmf-last", "cmf-last3"}));
    app->add_option("--attention", attention, "attention variant")->check(CLI::IsMember({"none", "visual", "avam"}));
    app->add_option("--modalities", modalities, "enabled streams, any of v (visual), a (audio), m (motion)");
    app->add_option("--widths", widths, "encoder block widths");
    app->add_option("--convs", convs, "convolutions per encoder block");
    app->add_option("--classifier", classifier, "hidden classifier widths");
    app->add_option("--dropout", dropout, "classifier dropout probability");
  }

  nn::ModelConfig resolve() const {
    nn::ModelConfig c;
    c.frames = frames;
    c.input_size = input_size;
    try {
      c.fusion = nn::parse_fusion(fusion);
      c.attention = nn::parse_attention(attention);
      c.modalities = nn::parse_modalities(modalities);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    c.encoder.widths = parse_list(widths, "widths");
    c.encoder.convs = parse_list(convs, "convs");
    c.classifier = parse_list(classifier, "classifier");
    c.dropout = dropout;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

nn::FtfdNet<float> load_model(const std::string& path) {
  const auto ck = io::load_checkpoint<float>(path);
  nn::FtfdNet<float> net(nn::model_config_from_json(json::parse(ck.config)));
  net.load(ck);
  return net;
}

std::vector<nn::PreparedClip> load_clips(const io::Manifest& m, const std::vector<io::Split>& splits, bool flows) {
  std::vector<nn::PreparedClip> out;
  for (auto s : splits) {
    auto part = train::load_split(m, s, flows);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-modal fake talking face detector"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic real/fake talking-face dataset");
  std::string synth_out;
  std::size_t n_real = 200, n_fake = 200, synth_size = 56, synth_frames = 25;
  std::uint64_t synth_seed = 7;
  std::string synth_mode = "both";
  double jitter = 3;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--real", n_real, "number of real clips");
  synth_cmd->add_option("--fake", n_fake, "number of fake clips");
  synth_cmd->add_option("--seed", synth_seed, "base seed");
  synth_cmd->add_option("--mode", synth_mode, "fake mode")->check(CLI::IsMember({"desync", "jitter", "both"}));
  synth_cmd->add_option("--size", synth_size, "frame size in pixels");
  synth_cmd->add_option("--frames", synth_frames, "frames per clip");
  synth_cmd->add_option("--jitter", jitter, "lip jitter amplitude in pixels");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a detector on a manifest");
  ModelFlags model_flags;
  model_flags.add(train_cmd);
  std::string train_manifest, train_out;
  train::TrainOptions topt;
  train_cmd->add_option("--manifest", train_manifest, "clip manifest")->required();
  train_cmd->add_option("--out", train_out, "output directory for model.ckpt and metrics.jsonl")->required();
  train_cmd->add_option("--epochs", topt.epochs, "training epochs");
  train_cmd->add_option("--batch", topt.batch, "minibatch size");
  train_cmd->add_option("--lr", topt.lr, "Adam learning rate");
  train_cmd->add_option("--seed", topt.seed, "seed for initialization, shuffling, window sampling and dropout");
  train_cmd->add_option("--patience", topt.patience, "early stop after this many epochs without better val LogLoss (0 = off)");
  train_cmd->add_option("--val-stride", topt.val.stride, "window stride when scoring the val split each epoch");
  train_cmd->add_option("--segment", topt.val.segment, "frames per evaluation segment for the val split");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  std::string eval_manifest, eval_ckpt, eval_split = "test";
  train::EvalOptions eopt;
  eval_cmd->add_option("--manifest", eval_manifest, "clip manifest")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--split", eval_split, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--threshold", eopt.threshold, "score threshold for the fake verdict");
  eval_cmd->add_option("--segment", eopt.segment, "frames per evaluation segment");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "score clips and print one detection record per clip");
  std::string infer_manifest, infer_ckpt, infer_split = "all";
  train::EvalOptions iopt;
  infer_cmd->add_option("--manifest", infer_manifest, "clip manifest")->required();
  infer_cmd->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer_cmd->add_option("--split", infer_split, "split to score")->check(CLI::IsMember({"all", "train", "val", "test"}));
  infer_cmd->add_option("--threshold", iopt.threshold, "score threshold for the fake verdict");
  infer_cmd->add_option("--segment", iopt.segment, "frames per evaluation segment");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every weight gradient of a miniature model");
  std::uint64_t gc_seed = 0;
  std::string gc_fusion = "cmf", gc_attention = "avam", gc_modalities = "vam";
  bool gc_no_dropout = false, gc_zero = false;
  double gc_tol = 1e-4;
  gc_cmd->add_option("--seed", gc_seed, "seed for weights and inputs");
  gc_cmd->add_option("--fusion", gc_fusion, "fusion strategy")->check(CLI::IsMember({"cmf", "concat", "sum", "cmf-kqv", "cmf-last", "cmf-last3"}));
  gc_cmd->add_option("--attention", gc_attention, "attention variant")->check(CLI::IsMember({"none", "visual", "avam"}));
  gc_cmd->add_option("--modalities", gc_modalities, "enabled streams");
  gc_cmd->add_flag("--no-dropout", gc_no_dropout, "disable dropout");
  gc_cmd->add_flag("--zero-input", gc_zero, "use all-zero inputs");
  gc_cmd->add_option("--tolerance", gc_tol, "maximum accepted relative error");

  // flow
  auto* flow_cmd = app.add_subcommand("flow", "optical flow between consecutive frames of a clip");
  std::string flow_frames, flow_out;
  std::vector<std::string> flow_regions;
  flow_cmd->add_option("--frames", flow_frames, "directory of frame containers")->required();
  flow_cmd->add_option("--out", flow_out, "output directory for flow containers")->required();
  flow_cmd->add_option("--region", flow_regions, "named region name:x,y,w,h for the magnitude summary (repeatable)");

  // attmap
  auto* att_cmd = app.add_subcommand("attmap", "export per-block attention maps for one window of a clip");
  std::string att_ckpt, att_frames, att_audio, att_out;
  std::size_t att_start = 0;
  att_cmd->add_option("--checkpoint", att_ckpt, "model checkpoint")->required();
  att_cmd->add_option("--frames", att_frames, "directory of frame containers")->required();
  att_cmd->add_option("--audio", att_audio, "16 kHz mono WAV aligned with the frames")->required();
  att_cmd->add_option("--start", att_start, "first frame of the window");
  att_cmd->add_option("--out", att_out, "output directory for map containers")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_thread_cap();

    if (*synth_cmd) {
      synth::SynthSpec base;
      base.mode = synth::parse_fake_mode(synth_mode);
      base.size = synth_size;
      base.frames = synth_frames;
      base.jitter_px = jitter;
      print_config("synth", {{"out", synth_out}, {"real", n_real}, {"fake", n_fake}, {"seed", synth_seed}, {"mode", synth_mode},
                             {"size", synth_size}, {"frames", synth_frames}, {"jitter", jitter}});
      try {
        base.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const auto m = synth::generate_dataset(n_real, n_fake, synth_seed, synth_out, base);
      std::size_t counts[3] = {};
      for (const auto& c : m.clips) ++counts[int(c.split)];
      std::cout << "wrote " << m.clips.size() << " clips (" << counts[0] << " train, " << counts[1] << " val, " << counts[2]
                << " test) to " << (fs::path(synth_out) / "manifest.tsv").string() << '\n';
      return 0;
    }

    if (*train_cmd) {
      const auto cfg = model_flags.resolve();
      json j = nn::to_json(cfg);
      j.update({{"manifest", train_manifest}, {"out", train_out}, {"epochs", topt.epochs}, {"batch", topt.batch}, {"lr", topt.lr},
                {"seed", topt.seed}, {"patience", topt.patience}, {"val_stride", topt.val.stride}, {"segment", topt.val.segment}});
      print_config("train", j);
      const auto m = io::load_manifest(train_manifest);
      const auto tr = train::load_split(m, io::Split::train, cfg.modalities.motion);
      const auto va = train::load_split(m, io::Split::val, cfg.modalities.motion);
      if (tr.empty()) throw std::runtime_error("train: empty split 'train' in " + train_manifest);
      fs::create_directories(train_out);
      std::ofstream log(fs::path(train_out) / "metrics.jsonl");
      topt.on_epoch = [&](const train::EpochRecord& r) {
        log << r.to_json_line() << '\n';
        log.flush();
        std::cerr << r.to_json_line() << '\n';
      };
      nn::FtfdNet<float> net(cfg, topt.seed);
      const auto res = train::fit(net, tr, va, topt);
      io::save_checkpoint((fs::path(train_out) / "model.ckpt").string(), res.best);
      std::cout << "best epoch " << res.best_epoch << " of " << res.log.size() << ", " << res.steps << " steps; checkpoint "
                << (fs::path(train_out) / "model.ckpt").string() << '\n';
      return 0;
    }

    if (*eval_cmd) {
      print_config("eval", {{"manifest", eval_manifest}, {"checkpoint", eval_ckpt}, {"split", eval_split},
                            {"threshold", eopt.threshold}, {"segment", eopt.segment}});
      auto net = load_model(eval_ckpt);
      const auto m = io::load_manifest(eval_manifest);
      const auto clips = load_clips(m, {parse_split(eval_split)}, net.config().modalities.motion);
      if (clips.empty()) throw std::runtime_error("eval: empty split '" + eval_split + "'");
      const auto r = train::evaluate(net, clips, eopt);
      std::printf("%-8s %6s %8s %8s %8s\n", "split", "n", "ACC", "AUC", "LogLoss");
      std::printf("%-8s %6zu %8s %8s %8s\n", eval_split.c_str(), r.n, fmt(r.acc, 2).c_str(),
                  r.auc ? fmt(*r.auc, 2).c_str() : "n/a", fmt(r.logloss, 4).c_str());
      return 0;
    }

    if (*infer_cmd) {
      print_config("infer", {{"manifest", infer_manifest}, {"checkpoint", infer_ckpt}, {"split", infer_split},
                             {"threshold", iopt.threshold}, {"segment", iopt.segment}});
      auto net = load_model(infer_ckpt);
      const auto m = io::load_manifest(infer_manifest);
      const auto splits = infer_split == "all" ? std::vector<io::Split>{io::Split::train, io::Split::val, io::Split::test}
                                               : std::vector<io::Split>{parse_split(infer_split)};
      const auto clips = load_clips(m, splits, net.config().modalities.motion);
      if (clips.empty()) throw std::runtime_error("infer: empty split '" + infer_split + "'");
      const auto reports = train::score_clips(net, clips, iopt);
      for (std::size_t i = 0; i < clips.size(); ++i) {
        std::cout << clips[i].id << '\t' << fmt(reports[i].score, 6) << '\t' << (reports[i].fake ? "fake" : "real") << '\n';
      }
      return 0;
    }

    if (*gc_cmd) {
      nn::ModelConfig base;
      try {
        base.fusion = nn::parse_fusion(gc_fusion);
        base.attention = nn::parse_attention(gc_attention);
        base.modalities = nn::parse_modalities(gc_modalities);
        base.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      train::GradCheckOptions o;
      o.dropout = !gc_no_dropout;
      o.zero_input = gc_zero;
      print_config("gradcheck", {{"seed", gc_seed}, {"fusion", gc_fusion}, {"attention", gc_attention}, {"modalities", gc_modalities},
                                 {"dropout", o.dropout}, {"zero_input", o.zero_input}, {"tolerance", gc_tol}});
      const auto r = train::grad_check(base, gc_seed, o);
      std::cout << "checked " << r.checked << " gradient entries in " << r.weights << " weights, " << fmt(r.seconds, 2) << " s\n"
                << "max relative error " << r.max_rel_error << " at " << r.worst << " (analytic " << r.worst_analytic
                << ", numeric " << r.worst_numeric << ")\n";
      const bool ok = r.finite && r.max_rel_error < gc_tol;
      std::cout << (ok ? "PASS" : "FAIL") << '\n';
      return ok ? 0 : 2;
    }

    if (*flow_cmd) {
      struct Region {
        std::string name;
        int x, y, w, h;
      };
      std::vector<Region> regions;
      for (const auto& spec : flow_regions) {
        Region r{};
        const auto colon = spec.find(':');
        char tail;
        if (colon == std::string::npos ||
            std::sscanf(spec.c_str() + colon + 1, "%d,%d,%d,%d%c", &r.x, &r.y, &r.w, &r.h, &tail) != 4 || r.w <= 0 || r.h <= 0) {
          throw UsageError("--region '" + spec + "' is not name:x,y,w,h");
        }
        r.name = spec.substr(0, colon);
        regions.push_back(r);
      }
      print_config("flow", {{"frames", flow_frames}, {"out", flow_out}, {"regions", flow_regions}});
      const auto frames = io::load_frames(flow_frames);
      if (frames.size() < 2) throw std::runtime_error("flow: need at least two frames in " + flow_frames);
      const auto flows = signal::pairwise_flows(frames);
      const int h = int(flows[0].height), w = int(flows[0].width);
      regions.insert(regions.begin(), Region{"frame", 0, 0, w, h});
      for (const auto& r : regions)
        if (r.x < 0 || r.y < 0 || r.x + r.w > w || r.y + r.h > h) throw UsageError("region " + r.name + " lies outside the frame");
      fs::create_directories(flow_out);
      std::printf("%-6s %-10s %12s %12s\n", "pair", "region", "mean_mag", "max_mag");
      for (std::size_t i = 0; i < flows.size(); ++i) {
        const auto& f = flows[i];
        io::write_tensor((fs::path(flow_out) / ("flow_" + io::frame_file_name(i))).string(),
                         signal::stack_flow_fields<float>(std::span<const signal::FlowField>(&f, 1)));
        for (const auto& r : regions) {
          double sum = 0, mx = 0;
          for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x) {
              const double m = std::hypot(f.dx(std::size_t(y), std::size_t(x)), f.dy(std::size_t(y), std::size_t(x)));
              sum += m;
              mx = std::max(mx, m);
            }
          std::printf("%-6zu %-10s %12.4f %12.4f\n", i, r.name.c_str(), sum / double(r.w * r.h), mx);
        }
      }
      return 0;
    }

    if (*att_cmd) {
      print_config("attmap", {{"checkpoint", att_ckpt}, {"frames", att_frames}, {"audio", att_audio}, {"start", att_start}, {"out", att_out}});
      auto net = load_model(att_ckpt);
      const auto& cfg = net.config();
      if (cfg.attention == nn::Attention::none) throw std::runtime_error("attmap: checkpoint was trained without attention");
      io::Clip clip{"clip", io::load_frames(att_frames), io::read_wav(att_audio), 0, 25.0};
      const auto prepared = nn::prepare_clip(std::move(clip), cfg.modalities.motion);
      if (att_start >= prepared.num_windows(cfg.frames)) {
        throw std::runtime_error("attmap: window starting at frame " + std::to_string(att_start) + " needs " +
                                 std::to_string(cfg.frames + 1) + " frames; clip has " + std::to_string(prepared.frames.size()));
      }
      const nn::WindowRef ref{&prepared, att_start};
      NoGradGuard no_grad;
      const auto tr = net.trace(nn::assemble_batch<float>(cfg, std::span<const nn::WindowRef>(&ref, 1)), Mode::eval);
      fs::create_directories(att_out);
      for (std::size_t b = 0; b < tr.visual.size(); ++b) {
        const auto& map = tr.visual[b].map;
        if (!map.defined()) continue;
        const auto path = fs::path(att_out) / ("attmap_b" + std::to_string(b + 1) + ".ftfd");
        io::write_tensor(path.string(), map);
        std::cout << path.string() << '\t' << to_string(map.shape()) << '\n';
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
