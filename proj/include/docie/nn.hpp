#pragma once

// Trainable parameters, small layers built on the autodiff tape, and the
// AdamW optimizer with per-group learning rates.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "docie/autodiff.hpp"

namespace docie::nn {

enum class ParamGroup : std::uint8_t { kEncoder = 0, kTask = 1 };

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamGroup group = ParamGroup::kTask;
  bool frozen = false;
};

// Owns every parameter of a model. Addresses are stable for the lifetime
// of the store so layers can hold raw Param pointers.
class ParamStore {
 public:
  Param& create(const std::string& name, Matrix init, ParamGroup group);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binds a parameter as a tape leaf; frozen parameters become constants.
ad::Var bind(ad::Tape& tape, Param& p);

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in,
         Eigen::Index out, ParamGroup group, std::mt19937_64& rng);

  ad::Var forward(ad::Tape& tape, const ad::Var& x) const;
  Matrix apply(const Matrix& x) const;

 private:
  Param* weight_ = nullptr;
  Param* bias_ = nullptr;
};

// One hidden ReLU layer followed by a linear projection.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, Eigen::Index in,
              Eigen::Index hidden, Eigen::Index out, ParamGroup group,
              std::mt19937_64& rng);

  ad::Var forward(ad::Tape& tape, const ad::Var& x) const;
  Matrix apply(const Matrix& x) const;

 private:
  Linear hidden_;
  Linear output_;
};

struct AdamWOptions {
  double encoder_lr = 5e-5;
  double task_lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

// Decoupled-weight-decay Adam. The caller supplies the learning-rate
// multiplier for the current step (warmup/decay schedule).
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  // Returns the pre-clipping global gradient norm.
  double step(ParamStore& store, double lr_multiplier);

  std::int64_t steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  AdamWOptions options_;
  std::int64_t steps_ = 0;
  std::unordered_map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// Raw binary matrix I/O shared by checkpoints.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);
template <typename T>
void write_pod(std::ostream& out, const T& v);
template <typename T>
T read_pod(std::istream& in);

}  // namespace docie::nn
