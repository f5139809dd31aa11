#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/attack.hpp"
#include "linleak/checkpoint.hpp"
#include "linleak/config.hpp"
#include "linleak/dataset.hpp"
#include "linleak/dataset_io.hpp"
#include "linleak/image_io.hpp"
#include "linleak/report.hpp"

namespace linleak {
namespace cli {

inline FedMode parse_mode(const std::string& s) {
  if (s == "fedsgd") return FedMode::kSgd;
  if (s == "fedavg") return FedMode::kAvg;
  throw std::invalid_argument("config: mode must be fedsgd or fedavg, got '" + s + "'");
}

inline AeMode parse_ae_mode(const std::string& s) {
  if (s == "plain") return AeMode::kPlain;
  if (s == "vae") return AeMode::kVae;
  throw std::invalid_argument("config: ae_mode must be plain or vae, got '" + s + "'");
}

inline MatchPolicy parse_match_policy(const std::string& s) {
  if (s == "greedy") return MatchPolicy::kGreedy;
  if (s == "nearest") return MatchPolicy::kNearest;
  throw std::invalid_argument("config: match_policy must be greedy or nearest, got '" +
                              s + "'");
}

inline AttackPlan build_plan(const Config& cfg) {
  AttackPlan p;
  p.encoder_hidden = cfg.get_size_list("encoder_hidden");
  p.latent_dim = cfg.get_size("latent_dim");
  p.leak_width = cfg.get_size("leak_k");
  p.leak_out = cfg.get_size("leak_out");
  p.head_hidden = cfg.get_size_list("head_hidden");
  p.num_classes = cfg.get_size("classes");
  p.ae_mode = parse_ae_mode(cfg.get_string("ae_mode"));
  p.beta = cfg.get_double("ae_beta");
  p.surrogate.epochs = cfg.get_size("ae_epochs");
  p.surrogate.batch_size = cfg.get_size("ae_batch");
  p.surrogate.lr = cfg.get_double("ae_lr");
  p.w2_row_value = cfg.get_double("w2_value");
  p.head_logit_std = cfg.get_double("head_logit_std");
  p.latent_scale = cfg.get_double("latent_scale");
  p.mode = parse_mode(cfg.get_string("mode"));
  p.dp.enabled = cfg.get_bool("dp_enabled");
  p.dp.clip = cfg.get_double("dp_clip");
  p.dp.sigma = cfg.get_double("dp_sigma");
  p.clients = cfg.get_size("clients");
  p.local_iters = cfg.get_size("local_iters");
  p.local_lr = cfg.get_double("local_lr");
  p.use_secure_aggregation = cfg.get_bool("secure_agg");
  p.th_db = cfg.get_double("th_db");
  p.match_policy = parse_match_policy(cfg.get_string("match_policy"));
  p.seed = cfg.get_u64("seed");
  return p;
}

/// Load the auxiliary (attacker-side) or target (client-side) dataset.
/// Only the auxiliary side honours the class filter and per-class cap,
/// which model an attacker with biased or scarce data.
inline Dataset load_side(const Config& cfg, bool aux) {
  const std::string data = cfg.get_string("data");
  Dataset ds;
  if (data == "synth") {
    ds = synth_shapes(cfg.get_size(aux ? "aux_count" : "target_count"),
                      cfg.get_size("synth_size"), cfg.get_size("classes"),
                      cfg.get_u64(aux ? "aux_seed" : "target_seed"));
  } else if (data == "idx") {
    ds = load_idx(cfg.get_string(aux ? "aux_images" : "target_images"),
                  cfg.get_string(aux ? "aux_labels" : "target_labels"));
  } else if (data == "csv") {
    ds = load_csv(cfg.get_string(aux ? "aux_csv" : "target_csv"),
                  cfg.get_size("csv_height"), cfg.get_size("csv_width"),
                  cfg.get_size("csv_channels"));
  } else {
    throw std::invalid_argument("config: data must be synth, idx, or csv, got '" + data +
                                "'");
  }
  if (aux) {
    auto keep_raw = cfg.get_size_list("aux_classes");
    std::size_t cap = cfg.get_size("aux_per_class_cap");
    if (!keep_raw.empty() || cap > 0) {
      std::vector<int> keep;
      if (keep_raw.empty())
        for (std::size_t c = 0; c < ds.num_classes; ++c) keep.push_back(static_cast<int>(c));
      else
        for (std::size_t c : keep_raw) keep.push_back(static_cast<int>(c));
      ds = filter_classes(ds, keep, cap);
    }
  }
  return ds;
}

inline std::string zero_pad(std::size_t v, std::size_t width = 3) {
  std::string s = std::to_string(v);
  while (s.size() < width) s.insert(s.begin(), '0');
  return s;
}

inline void ensure_parent_dir(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

/// Recreate a directory empty, so stale artifacts from earlier runs
/// cannot leak into this one's evaluation.
inline void reset_dir(const std::string& path) {
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
}

inline int run_prepare(const Config& cfg, std::ostream& out) {
  Dataset aux = load_side(cfg, true);
  AttackPlan plan = build_plan(cfg);
  PreparedAttack prep = prepare(plan, aux.images);

  const std::string ae_path = cfg.get_string("ae_checkpoint");
  const std::string model_path = cfg.get_string("model_checkpoint");
  ensure_parent_dir(ae_path);
  ensure_parent_dir(model_path);
  save_autoencoder(ae_path, prep.surrogate);
  save_adversarial_model(model_path, prep.adv);

  out << "prepare: aux=" << aux.size() << " surrogate_loss="
      << prep.surrogate_training.final_loss() << " k=" << prep.adv.k
      << " d=" << prep.adv.d << " -> " << ae_path << ", " << model_path << "\n";
  return 0;
}

inline int run_attack(const Config& cfg, std::ostream& out) {
  AttackPlan plan = build_plan(cfg);
  AutoencoderPair surrogate = load_autoencoder(cfg.get_string("ae_checkpoint"));
  AdversarialModel adv = load_adversarial_model(cfg.get_string("model_checkpoint"));
  Dataset pool = load_side(cfg, false);

  const std::size_t m = cfg.get_size("batch_size");
  Rng trial_rng = trial_generator(plan.seed, m, 0);
  TrialBatch batch = draw_trial_batch(pool, m, trial_rng);
  auto clients = partition_clients(batch.images, batch.labels, plan);
  auto round = execute_round(adv.model, clients, plan.mode, plan.dp, trial_rng.child(1),
                             plan.use_secure_aggregation);
  auto rec = reconstruct(adv, surrogate, round);
  auto rep = match_and_rate(batch.images, rec.images, rec.bins, plan.th_db,
                            plan.match_policy);

  const std::string dir = cfg.get_string("out_dir");
  std::filesystem::create_directories(dir);
  reset_dir(dir + "/originals");
  reset_dir(dir + "/recovered");
  for (std::size_t i = 0; i < m; ++i)
    write_image(dir + "/originals/sample_" + zero_pad(i) + ".pgm",
                image_from_row(batch.images, i, pool.height, pool.width, pool.channels));
  for (std::size_t r = 0; r < rec.images.rows; ++r)
    write_image(dir + "/recovered/bin_" + zero_pad(rec.bins[r]) + ".pgm",
                image_from_row(rec.images, r, pool.height, pool.width, pool.channels));
  if (cfg.get_bool("montage")) {
    write_image(dir + "/montage_originals.pgm",
                montage(batch.images, pool.height, pool.width, pool.channels));
    if (rec.images.rows > 0)
      write_image(dir + "/montage_recovered.pgm",
                  montage(rec.images, pool.height, pool.width, pool.channels));
  }
  write_json(dir + "/report.json",
             attack_report(cfg, rep, rec, m, adv.k, plan.seed,
                           cfg.get_bool("zero_timing")));

  out << "attack: m=" << m << " recovered=" << rec.bins.size() << " rate=" << rep.rate
      << " mean_psnr_success=" << rep.mean_psnr_success << " -> " << dir
      << "/report.json\n";
  return 0;
}

namespace detail {

inline std::vector<std::string> sorted_pgm_names(const std::string& dir) {
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("evaluate: missing directory '" + dir + "'");
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline Tensor stack_images(const std::string& dir, const std::vector<std::string>& names) {
  Tensor batch;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Image img = read_image(dir + "/" + names[i]);
    if (i == 0) batch = Tensor::zeros(names.size(), img.pixels.size());
    if (img.pixels.size() != batch.cols)
      throw std::runtime_error("evaluate: image size mismatch at '" + names[i] + "'");
    for (std::size_t j = 0; j < img.pixels.size(); ++j) batch(i, j) = img.pixels[j];
  }
  return batch;
}

inline std::size_t bin_of_filename(const std::string& name) {
  auto us = name.find('_');
  auto dot = name.rfind('.');
  if (us == std::string::npos || dot == std::string::npos || dot <= us + 1)
    throw std::runtime_error("evaluate: cannot parse bin index from '" + name + "'");
  std::size_t idx = 0;
  std::string digits = name.substr(us + 1, dot - us - 1);
  for (char c : digits) {
    if (c < '0' || c > '9')
      throw std::runtime_error("evaluate: cannot parse bin index from '" + name + "'");
    idx = idx * 10 + static_cast<std::size_t>(c - '0');
  }
  return idx;
}

}  // namespace detail

/// Recompute the matching metrics from the images a previous attack run
/// wrote to disk. The numbers live in the 8-bit quantized domain, so
/// they can differ slightly from the in-memory report.
inline int run_evaluate(const Config& cfg, std::ostream& out) {
  const std::string dir = cfg.get_string("out_dir");
  auto orig_names = detail::sorted_pgm_names(dir + "/originals");
  auto rec_names = detail::sorted_pgm_names(dir + "/recovered");
  if (orig_names.empty()) throw std::runtime_error("evaluate: no originals in '" + dir + "'");

  Tensor originals = detail::stack_images(dir + "/originals", orig_names);
  Tensor recovered = rec_names.empty()
                         ? Tensor::zeros(0, originals.cols)
                         : detail::stack_images(dir + "/recovered", rec_names);
  std::vector<std::size_t> bins;
  for (const auto& n : rec_names) bins.push_back(detail::bin_of_filename(n));

  auto rep = match_and_rate(originals, recovered, bins, cfg.get_double("th_db"),
                            parse_match_policy(cfg.get_string("match_policy")));

  ordered_json j;
  j["config"] = config_json(cfg);
  j["m"] = originals.rows;
  j["recovered"] = recovered.rows;
  j["rate"] = rep.rate;
  j["mean_psnr_success"] = rep.mean_psnr_success;
  j["threshold_db"] = rep.threshold_db;
  ordered_json matches = ordered_json::array();
  for (const auto& mt : rep.matches) {
    ordered_json e;
    e["original"] = mt.original;
    e["bin"] = mt.bin;
    e["psnr_db"] = mt.psnr_db;
    matches.push_back(e);
  }
  j["matches"] = matches;
  j["per_sample_psnr"] = rep.per_sample_psnr;
  write_json(dir + "/evaluation.json", j);

  out << "evaluate: m=" << originals.rows << " recovered=" << recovered.rows
      << " rate=" << rep.rate << " -> " << dir << "/evaluation.json\n";
  return 0;
}

inline int run_experiment_cmd(const Config& cfg, std::ostream& out) {
  Dataset aux = load_side(cfg, true);
  Dataset pool = load_side(cfg, false);
  AttackPlan plan = build_plan(cfg);
  PreparedAttack prep = prepare(plan, aux.images);

  auto table = run_experiment(prep, plan, pool, cfg.get_size_list("batch_sizes"),
                              cfg.get_size("trials"));
  const std::string dir = cfg.get_string("out_dir");
  std::filesystem::create_directories(dir);
  write_json(dir + "/experiment.json",
             experiment_report(cfg, table, cfg.get_bool("zero_timing")));

  for (const auto& s : table.summary)
    out << "experiment: m=" << s.m << " mean_rate=" << s.mean_rate
        << " std_rate=" << s.std_rate << " mean_psnr_success=" << s.mean_psnr_success
        << "\n";
  out << "experiment: -> " << dir << "/experiment.json\n";
  return 0;
}

/// prepare + attack back to back through the same checkpoints a user
/// would produce, on the synthetic defaults.
inline int run_demo(const Config& cfg, std::ostream& out) {
  int rc = run_prepare(cfg, out);
  if (rc != 0) return rc;
  return run_attack(cfg, out);
}

inline void usage(std::ostream& os) {
  os << "usage: linleak <prepare|attack|evaluate|experiment|demo> [--config=FILE]"
        " [--key=value ...]\n"
        "  prepare     train the surrogate, craft the model, save checkpoints\n"
        "  attack      run one round against the checkpoints, write images + report\n"
        "  evaluate    recompute metrics from a previous attack's images\n"
        "  experiment  batch-size sweep with per-size summaries\n"
        "  demo        prepare + attack on the synthetic defaults\n"
        "  config file lines are 'key = value'; '#' comments; flags beat file values\n";
}

}  // namespace cli

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  if (argc < 2) {
    cli::usage(err);
    return 2;
  }
  std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    cli::usage(out);
    return 0;
  }
  try {
    Config cfg = Config::defaults();
    std::vector<std::string> flags;
    for (int i = 2; i < argc; ++i) {
      std::string a = argv[i];
      if (a.rfind("--config=", 0) == 0)
        cfg.load_file(a.substr(9));
      else
        flags.push_back(a);
    }
    for (const auto& f : flags) cfg.apply_flag(f);

    if (cmd == "prepare") return cli::run_prepare(cfg, out);
    if (cmd == "attack") return cli::run_attack(cfg, out);
    if (cmd == "evaluate") return cli::run_evaluate(cfg, out);
    if (cmd == "experiment") return cli::run_experiment_cmd(cfg, out);
    if (cmd == "demo") return cli::run_demo(cfg, out);
    err << "linleak: unknown subcommand '" << cmd << "'\n";
    cli::usage(err);
    return 2;
  } catch (const std::exception& e) {
    err << "linleak: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace linleak
