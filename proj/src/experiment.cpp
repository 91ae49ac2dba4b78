#include "mlr/experiment.hpp"

#include <torch/torch.h>

#include <fstream>

namespace mlr {

namespace fs = std::filesystem;

namespace {

MaskStrategy parse_strategy(const std::string& s) {
  if (s == "cube") return MaskStrategy::Cube;
  if (s == "spatial") return MaskStrategy::Spatial;
  if (s == "temporal") return MaskStrategy::Temporal;
  throw TypeMismatch("unknown mask strategy: " + s);
}

void save_module(const torch::nn::Module& module, const std::string& path) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to(path);
}

void load_module(torch::nn::Module& module, const std::string& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path);
  module.load(archive);
}

}  // namespace

Trainer::Trainer(const ExperimentConfig& cfg) : cfg_(cfg), rngs_(cfg.get_int("run.seed")) {
  torch::manual_seed(static_cast<uint64_t>(cfg.get_int("run.seed")));
  at::set_num_threads(static_cast<int>(cfg.get_int("run.threads")));

  EnvSpec spec;
  spec.render_h = spec.render_w = cfg.get_int("env.render_size");
  spec.action_repeat = cfg.get_int("env.action_repeat");
  spec.frame_stack = cfg.get_int("env.frame_stack");
  spec.max_episode_frames = cfg.get_int("env.max_episode_frames");
  env_ = make_wrapped_env(cfg.get_str("env.id"), spec);
  eval_env_ = make_wrapped_env(cfg.get_str("env.id"), spec);

  discrete_ = env_->spec().action_space.discrete;
  action_dim_ = env_->spec().action_space.dim;

  buffer_ = std::make_unique<ReplayBuffer>(
      cfg.get_int("replay.capacity"), cfg.get_int("replay.min_size"),
      cfg.get_bool("replay.prioritized"), cfg.get_real("replay.priority_exponent"));

  EncoderConfig enc_cfg;
  enc_cfg.variant = cfg.get_str("encoder.variant") == "discrete" ? EncoderVariant::Discrete
                                                                 : EncoderVariant::Continuous;
  int64_t frame_channels = env_->spec().grayscale ? 1 : 3;
  enc_cfg.in_channels = frame_channels * spec.frame_stack;
  enc_cfg.in_h = enc_cfg.in_w = cfg.get_int("net.input_size");
  enc_cfg.latent_dim = cfg.get_int("encoder.latent_dim");
  enc_cfg.conv_channels = cfg.get_int("encoder.conv_channels");
  encoder_ = PixelEncoder(enc_cfg);

  aug_.crop.margin = cfg.get_int("aug.crop_margin");
  aug_.crop.out_h = aug_.crop.out_w = enc_cfg.in_h;
  aug_.intensity.scale = cfg.get_real("aug.intensity_scale");
  aug_.intensity.clip = cfg.get_real("aug.intensity_clip");

  if (discrete_) {
    RainbowConfig rc;
    rc.atoms = cfg.get_int("agent.atoms");
    rc.v_min = cfg.get_real("agent.v_min");
    rc.v_max = cfg.get_real("agent.v_max");
    rc.multi_step = cfg.get_int("agent.multi_step");
    rc.double_q = cfg.get_bool("agent.double_q");
    rc.dueling = cfg.get_bool("agent.dueling");
    rc.noisy_sigma = cfg.get_real("agent.noisy_sigma");
    rc.gamma = cfg.get_real("agent.gamma");
    rc.lr = cfg.get_real("agent.lr");
    rc.adam_eps = cfg.get_real("agent.adam_eps");
    rc.max_grad_norm = cfg.get_real("agent.max_grad_norm");
    rc.hidden = cfg.get_int("agent.hidden");
    rc.batch = cfg.get_int("agent.batch");
    rc.clip_rewards = cfg.get_bool("agent.clip_rewards");
    rainbow_ = std::make_unique<RainbowAgent>(rc, encoder_, action_dim_);
  } else {
    SACConfig sc;
    sc.gamma = cfg.get_real("agent.gamma");
    sc.init_temperature = cfg.get_real("agent.init_temperature");
    sc.actor_lr = cfg.get_real("agent.actor_lr");
    sc.critic_lr = cfg.get_real("agent.critic_lr");
    sc.alpha_lr = cfg.get_real("agent.alpha_lr");
    sc.alpha_beta1 = cfg.get_real("agent.alpha_beta1");
    sc.critic_ema = cfg.get_real("agent.critic_ema");
    sc.encoder_ema = cfg.get_real("mlr.ema_m");
    sc.target_update_freq = cfg.get_int("agent.target_update_freq");
    sc.twin_critics = cfg.get_bool("agent.twin_critics");
    sc.hidden = cfg.get_int("agent.hidden");
    sc.log_std_min = cfg.get_real("agent.log_std_min");
    sc.log_std_max = cfg.get_real("agent.log_std_max");
    sc.batch = cfg.get_int("agent.batch");
    sac_ = std::make_unique<SacAgent>(sc, encoder_, action_dim_);
  }

  mlr_cfg_.lambda = cfg.get_real("mlr.lambda");
  mlr_cfg_.K = cfg.get_int("mlr.K");
  auto cube = cfg.get_int_list("mask.cube");
  if (cube.size() != 3) throw TypeMismatch("mask.cube must be [k,h,w]");
  mlr_cfg_.mask.k = cube[0];
  mlr_cfg_.mask.h = cube[1];
  mlr_cfg_.mask.w = cube[2];
  mlr_cfg_.mask.eta = cfg.get_real("mask.ratio");
  mlr_cfg_.mask.strategy = parse_strategy(cfg.get_str("mask.strategy"));
  mlr_cfg_.mask.fill_value = static_cast<float>(cfg.get_real("mask.fill"));
  mlr_cfg_.mask_space =
      cfg.get_str("mask.space") == "feature" ? MaskSpace::Feature : MaskSpace::Pixel;
  mlr_cfg_.target_space =
      cfg.get_str("mlr.target_space") == "pixel" ? TargetSpace::Pixel : TargetSpace::Latent;
  mlr_cfg_.loss_metric =
      cfg.get_str("mlr.loss_metric") == "mse" ? LossMetric::Mse : LossMetric::Cosine;
  mlr_cfg_.use_action_tokens = cfg.get_bool("mlr.use_action_tokens");
  mlr_cfg_.momentum_decoder = cfg.get_bool("mlr.momentum_decoder");
  mlr_cfg_.heads.use_projection = cfg.get_bool("heads.projection");
  mlr_cfg_.heads.use_prediction = cfg.get_bool("heads.prediction");
  mlr_cfg_.heads.hidden = cfg.get_int("heads.hidden");
  mlr_cfg_.heads.proj_dim = cfg.get_int("heads.proj_dim");
  mlr_cfg_.warmup_steps = cfg.get_int("mlr.warmup_steps");
  mlr_cfg_.aux_batch = cfg.get_int("mlr.aux_batch");
  mlr_cfg_.aug = aug_;
  mlr_cfg_.ema_m = cfg.get_real("mlr.ema_m");
  mlr_cfg_.decoder_layers = cfg.get_int("decoder.layers");
  mlr_cfg_.decoder_heads = cfg.get_int("decoder.heads");
  mlr_cfg_.decoder_mlp_ratio = cfg.get_real("decoder.mlp_ratio");
  mlr_cfg_.decoder_pos_embeddings = cfg.get_bool("decoder.pos_embeddings");

  if (mlr_cfg_.lambda > 0) {
    PixelEncoder momentum =
        discrete_ ? rainbow_->momentum_encoder() : sac_->momentum_encoder();
    objective_ = std::make_unique<MlrObjective>(mlr_cfg_, encoder_, momentum, action_dim_,
                                                discrete_);
    aux_opt_ = std::make_unique<torch::optim::Adam>(
        objective_->aux_parameters(), torch::optim::AdamOptions(cfg.get_real("mlr.aux_lr")));
  }

  out_dir_ = cfg.get_str("run.out_dir");
  fs::create_directories(out_dir_);
  log_path_ = out_dir_ + "/metrics.log";

  next_eval_ = cfg.get_int("run.eval_every");
  next_log_ = cfg.get_int("run.log_every");
  next_checkpoint_ =
      cfg.get_int("run.checkpoint_every") > 0 ? cfg.get_int("run.checkpoint_every") : -1;
}

Action Trainer::random_action() {
  if (discrete_) return Action(rngs_.action.uniform_int(0, action_dim_ - 1));
  std::vector<float> v(static_cast<size_t>(action_dim_));
  for (auto& x : v) x = static_cast<float>(rngs_.action.uniform(-1.0, 1.0));
  return Action(std::move(v));
}

Action Trainer::train_action(const Observation& obs) {
  return discrete_ ? rainbow_->act(obs, true, rngs_.action)
                   : sac_->act(obs, true, rngs_.action);
}

Policy Trainer::eval_policy() {
  if (discrete_)
    return [this](const Observation& o) { return rainbow_->act(o, false, rngs_.noise); };
  return [this](const Observation& o) { return sac_->act(o, false, rngs_.noise); };
}

void Trainer::interact_once() {
  if (!episode_active_) {
    obs_ = env_->reset(rngs_.env.engine()());
    episode_active_ = true;
    episode_return_ = 0.0;
  }
  Action a = (interactions_ < cfg_.get_int("run.init_steps")) ? random_action()
                                                              : train_action(obs_);
  auto step = env_->step(a);
  buffer_->push({obs_, a, step.reward, step.obs, step.done});
  obs_ = step.obs;
  episode_return_ += step.reward;
  ++interactions_;
  frames_ = env_->frames();
  if (step.done) episode_active_ = false;
}

void Trainer::update_once() {
  double lambda = mlr_cfg_.lambda;
  torch::Tensor rl_loss;
  torch::Tensor per_item;
  RainbowBatch rb;
  SacBatch sb;

  if (discrete_) {
    buffer_->set_priority_beta(
        cfg_.get_real("replay.priority_beta0") +
        (1.0 - cfg_.get_real("replay.priority_beta0")) *
            std::min(1.0, static_cast<double>(frames_) /
                              static_cast<double>(cfg_.get_int("run.env_steps"))));
    rb = rainbow_->make_batch(*buffer_, rainbow_->config().batch, aug_, rngs_.augment,
                              rngs_.sampler);
    std::tie(rl_loss, per_item) = rainbow_->loss(rb, rngs_.noise);
  } else {
    auto transitions = buffer_->sample_batch(sac_->config().batch, rngs_.sampler);
    sb = sac_->make_batch(transitions, aug_, rngs_.augment);
    rl_loss = sac_->critic_loss(sb, rngs_.noise);
  }

  torch::Tensor total = rl_loss;
  bool aux_this_step = false;
  MLRLossReport report;
  if (objective_ && lambda > 0) {
    try {
      auto trajs = buffer_->sample_trajectories(mlr_cfg_.aux_batch, mlr_cfg_.K, rngs_.sampler);
      auto obs = trajectories_to_obs(trajs);
      auto actions = trajectories_to_actions(trajs);
      auto [mlr_loss, rep] = objective_->compute_loss(obs, actions, rngs_.mask, rngs_.augment);
      report = rep;
      total = rl_loss + lambda * mlr_loss;
      aux_this_step = true;
    } catch (const InsufficientData&) {
      ++aux_skips_;  // no valid K-window yet; train the RL loss alone
    } catch (const NumericalError&) {
      ++aux_skips_;
    }
  }

  if (discrete_)
    rainbow_->optimizer().zero_grad();
  else
    sac_->critic_optimizer().zero_grad();
  if (aux_opt_) aux_opt_->zero_grad();

  total.backward();

  if (discrete_) {
    torch::nn::utils::clip_grad_norm_(rainbow_->parameters(), rainbow_->config().max_grad_norm);
    rainbow_->optimizer().step();
  } else {
    sac_->critic_optimizer().step();
  }

  if (aux_this_step) {
    ++aux_updates_;
    double lr_aux = cfg_.get_real("mlr.aux_lr");
    if (mlr_cfg_.warmup_steps > 0)
      lr_aux = warmup_lr(lr_aux, aux_updates_, mlr_cfg_.warmup_steps);
    for (auto& group : aux_opt_->param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_aux);
    last_lr_aux_ = lr_aux;
    last_grad_norm_ = objective_->grad_norm();
    aux_opt_->step();
    last_mlr_loss_ = report.loss;
  }

  if (discrete_) {
    for (size_t i = 0; i < rb.indices.size(); ++i)
      buffer_->update_priority(rb.indices[i],
                               per_item[static_cast<int64_t>(i)].item<float>() + 1e-6f);
  } else {
    sac_->update_actor_and_alpha(sb.obs, rngs_.noise);
  }

  ++updates_;
  int64_t freq = discrete_ ? cfg_.get_int("agent.target_update_freq")
                           : sac_->config().target_update_freq;
  if (updates_ % freq == 0) {
    if (discrete_)
      rainbow_->hard_update_targets();
    else
      sac_->soft_update_targets();
    if (objective_) objective_->ema_step();
  }

  last_rl_loss_ = rl_loss.item<double>();
  last_total_loss_ = total.item<double>();
}

void Trainer::maybe_update() {
  if (interactions_ < cfg_.get_int("run.init_steps")) return;
  if (buffer_->size() < buffer_->min_size()) return;
  if (interactions_ % cfg_.get_int("run.update_every") != 0) return;
  int64_t rounds = cfg_.get_int("agent.updates_per_step");
  for (int64_t i = 0; i < rounds; ++i) update_once();
}

EvalResult Trainer::evaluate_now() {
  return evaluate_policy(eval_policy(), *eval_env_, cfg_.get_int("run.eval_episodes"),
                         rngs_.eval_env);
}

double Trainer::regression_similarity(int64_t n) {
  if (objective_) return objective_->regression_accuracy(*buffer_, n, rngs_.mask, rngs_.sampler);
  // Baseline runs have no auxiliary networks; measure the same diagnostic
  // directly on the encoder.
  return encoder_regression_accuracy(encoder_, mlr_cfg_, *buffer_, n, rngs_.mask, rngs_.sampler);
}

void Trainer::maybe_eval(MetricLog& log) {
  if (next_eval_ <= 0 || frames_ < next_eval_) return;
  auto result = evaluate_now();
  log.append(frames_, "eval", "return_mean", result.mean);
  log.append(frames_, "eval", "return_std", result.std);
  while (next_eval_ <= frames_) next_eval_ += cfg_.get_int("run.eval_every");
}

void Trainer::log_train_metrics(MetricLog& log) {
  if (frames_ < next_log_) return;
  log.append(frames_, "train", "rl_loss", last_rl_loss_);
  if (objective_ && mlr_cfg_.lambda > 0) {
    log.append(frames_, "train", "mlr_loss", last_mlr_loss_);
    log.append(frames_, "train", "lr_aux", last_lr_aux_);
    log.append(frames_, "train", "grad_norm", last_grad_norm_);
  }
  log.append(frames_, "train", "total_loss", last_total_loss_);
  while (next_log_ <= frames_) next_log_ += cfg_.get_int("run.log_every");
}

void Trainer::run_until(int64_t frame_limit) {
  MetricLog log(log_path_, static_cast<uint64_t>(cfg_.get_int("run.seed")), cfg_.hash());
  while (frames_ < frame_limit) {
    interact_once();
    maybe_update();
    log_train_metrics(log);
    maybe_eval(log);
    if (next_checkpoint_ > 0 && frames_ >= next_checkpoint_) {
      save_checkpoint(out_dir_ + "/checkpoint_" + std::to_string(frames_));
      while (next_checkpoint_ <= frames_)
        next_checkpoint_ += cfg_.get_int("run.checkpoint_every");
    }
  }
}

std::string Trainer::run() {
  int64_t budget = cfg_.get_int("run.env_steps");

  std::ofstream cfg_out(out_dir_ + "/config.resolved");
  cfg_out << cfg_.serialize();
  cfg_out.close();

  if (budget == 0) {
    save_checkpoint(out_dir_ + "/checkpoint_final");
    return out_dir_ + "/checkpoint_final";
  }

  run_until(budget);
  MetricLog log(log_path_, static_cast<uint64_t>(cfg_.get_int("run.seed")), cfg_.hash());

  auto final_eval = evaluate_now();
  log.append(frames_, "final", "return_mean", final_eval.mean);
  log.append(frames_, "final", "return_std", final_eval.std);
  try {
    log.append(frames_, "final", "regression_sim", regression_similarity(256));
  } catch (const InsufficientData&) {
  }
  if (aux_skips_ > 0)
    log.append(frames_, "final", "aux_skips", static_cast<double>(aux_skips_));

  save_checkpoint(out_dir_ + "/checkpoint_final");
  return out_dir_ + "/checkpoint_final";
}

void Trainer::save_checkpoint(const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream meta(dir + "/meta.bin", std::ios::binary);
    const char magic[8] = {'M', 'L', 'R', 'C', 'K', 'P', '0', '1'};
    meta.write(magic, 8);
    auto cfg_text = cfg_.serialize();
    uint64_t n = cfg_text.size();
    meta.write(reinterpret_cast<const char*>(&n), sizeof(n));
    meta.write(cfg_text.data(), static_cast<std::streamsize>(n));
    int64_t fields[7] = {frames_,      interactions_, updates_,
                         aux_updates_, aux_skips_,    episode_active_ ? 1 : 0,
                         next_eval_};
    meta.write(reinterpret_cast<const char*>(fields), sizeof(fields));
    int64_t cursors[2] = {next_log_, next_checkpoint_};
    meta.write(reinterpret_cast<const char*>(cursors), sizeof(cursors));
    double episode_return = episode_return_;
    meta.write(reinterpret_cast<const char*>(&episode_return), sizeof(episode_return));
    rngs_.save(meta);
    env_->save_state(meta);
  }
  {
    std::ofstream buf(dir + "/buffer.bin", std::ios::binary);
    buffer_->save(buf);
  }
  if (discrete_) {
    save_module(*rainbow_, dir + "/agent.pt");
    rainbow_->save_optimizers(dir + "/agent");
  } else {
    save_module(*sac_, dir + "/agent.pt");
    sac_->save_optimizers(dir + "/agent");
  }
  if (objective_) {
    save_module(*objective_, dir + "/objective.pt");
    torch::save(*aux_opt_, dir + "/aux_opt.pt");
  }
}

void Trainer::load_checkpoint(const std::string& dir) {
  std::ifstream meta(dir + "/meta.bin", std::ios::binary);
  if (!meta) throw FileNotFound("checkpoint meta not found in " + dir);
  char magic[8];
  meta.read(magic, 8);
  if (std::string(magic, 8) != "MLRCKP01") throw Error("bad checkpoint magic");
  uint64_t n = 0;
  meta.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::string cfg_text(n, '\0');
  meta.read(cfg_text.data(), static_cast<std::streamsize>(n));
  if (cfg_text != cfg_.serialize())
    throw InvalidArgument("checkpoint was produced by a different config");
  int64_t fields[7];
  meta.read(reinterpret_cast<char*>(fields), sizeof(fields));
  frames_ = fields[0];
  interactions_ = fields[1];
  updates_ = fields[2];
  aux_updates_ = fields[3];
  aux_skips_ = fields[4];
  episode_active_ = fields[5] != 0;
  next_eval_ = fields[6];
  int64_t cursors[2];
  meta.read(reinterpret_cast<char*>(cursors), sizeof(cursors));
  next_log_ = cursors[0];
  next_checkpoint_ = cursors[1];
  meta.read(reinterpret_cast<char*>(&episode_return_), sizeof(episode_return_));
  rngs_.load(meta);
  env_->load_state(meta);

  {
    std::ifstream buf(dir + "/buffer.bin", std::ios::binary);
    if (!buf) throw FileNotFound("checkpoint buffer not found in " + dir);
    buffer_->load(buf);
  }
  if (discrete_) {
    load_module(*rainbow_, dir + "/agent.pt");
    rainbow_->load_optimizers(dir + "/agent");
  } else {
    load_module(*sac_, dir + "/agent.pt");
    sac_->load_optimizers(dir + "/agent");
  }
  if (objective_) {
    load_module(*objective_, dir + "/objective.pt");
    torch::load(*aux_opt_, dir + "/aux_opt.pt");
  }
  if (episode_active_) obs_ = env_->last_observation();
}

std::string run_pretrain(const ExperimentConfig& cfg, int64_t collect_steps,
                         int64_t pretrain_steps) {
  Trainer trainer(cfg);
  auto& env = trainer.env();
  auto& rngs = trainer.rngs();
  Observation obs = env.reset(rngs.env.engine()());
  for (int64_t i = 0; i < collect_steps; ++i) {
    Action a = env.spec().action_space.discrete
                   ? Action(rngs.action.uniform_int(0, env.spec().action_space.dim - 1))
                   : [&] {
                       std::vector<float> v(static_cast<size_t>(env.spec().action_space.dim));
                       for (auto& x : v) x = static_cast<float>(rngs.action.uniform(-1.0, 1.0));
                       return Action(std::move(v));
                     }();
    auto step = env.step(a);
    trainer.buffer().push({obs, a, step.reward, step.obs, step.done});
    obs = step.done ? env.reset(rngs.env.engine()()) : step.obs;
  }

  if (!trainer.objective()) throw InvalidArgument("pretraining requires mlr.lambda > 0");
  MetricLog log(trainer.log_path(), static_cast<uint64_t>(cfg.get_int("run.seed")), cfg.hash());
  pretrain_only(*trainer.objective(), trainer.buffer(), pretrain_steps,
                cfg.get_real("mlr.aux_lr"), rngs.mask, rngs.augment, rngs.sampler,
                [&](int64_t step, const MLRLossReport& report) {
                  if (step % 50 == 0 || step == 1)
                    log.append(step, "pretrain", "mlr_loss", report.loss);
                });

  std::string out = cfg.get_str("run.out_dir") + "/encoder_pretrained.pt";
  save_module(*trainer.encoder(), out);
  return out;
}

}  // namespace mlr
