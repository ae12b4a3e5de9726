#include "dflow/config.hpp"

#include "dflow/errors.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>

namespace dflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError("config: bad value '" + v + "' for " + key);
  return out;
}

void require_one_of(const std::string& key, const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (v == o) return;
  }
  throw ConfigError("config: invalid value '" + v + "' for " + key);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "grid.n") {
    grid_n = parse_number<int>(key, v);
  } else if (key == "time.dt") {
    time_dt = parse_number<double>(key, v);
  } else if (key == "time.T") {
    time_T = parse_number<double>(key, v);
  } else if (key == "solver.remap_every") {
    solver_remap_every = parse_number<int>(key, v);
  } else if (key == "ic.kind") {
    require_one_of(key, v, {"random_vorticity", "slotted_cylinder", "expression"});
    ic_kind = v;
  } else if (key == "ic.K") {
    ic_K = parse_number<int>(key, v);
  } else if (key == "ic.seed") {
    ic_seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "ic.expr") {
    ic_expr = v;
  } else if (key == "lifter.kind") {
    require_one_of(key, v, {"oracle", "registration", "spectral"});
    lifter_kind = v;
  } else if (key == "lifter.window") {
    lifter_window = parse_number<int>(key, v);
  } else if (key == "lifter.k_feat") {
    lifter_k_feat = parse_number<int>(key, v);
  } else if (key == "lifter.ridge") {
    lifter_ridge = parse_number<double>(key, v);
  } else if (key == "reg.lambda") {
    reg_lambda = parse_number<double>(key, v);
  } else if (key == "reg.max_iters") {
    reg_max_iters = parse_number<int>(key, v);
  } else if (key == "rollout.scheme") {
    require_one_of(key, v, {"compose", "semilag"});
    rollout_scheme = v;
  } else if (key == "rollout.remap_every") {
    rollout_remap_every = parse_number<int>(key, v);
  } else if (key == "diag.quad_n") {
    diag_quad_n = parse_number<int>(key, v);
  } else if (key == "diag.eps") {
    diag_eps = parse_number<double>(key, v);
  } else if (key == "out.dir") {
    if (v.empty()) throw ConfigError("config: out.dir must not be empty");
    out_dir = v;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void RunConfig::validate() const {
  if (grid_n < 4 || grid_n % 2 != 0) throw ConfigError("config: grid.n must be even and at least 4");
  if (!(time_dt > 0.0)) throw ConfigError("config: time.dt must be positive");
  if (!(time_T > 0.0)) throw ConfigError("config: time.T must be positive");
  if (solver_remap_every < 1) throw ConfigError("config: solver.remap_every must be positive");
  if (ic_K < 1) throw ConfigError("config: ic.K must be positive");
  if (lifter_window < 1) throw ConfigError("config: lifter.window must be positive");
  if (lifter_k_feat < 0) throw ConfigError("config: lifter.k_feat must be nonnegative");
  if (!(lifter_ridge >= 0.0)) throw ConfigError("config: lifter.ridge must be nonnegative");
  if (!(reg_lambda >= 0.0)) throw ConfigError("config: reg.lambda must be nonnegative");
  if (reg_max_iters < 1) throw ConfigError("config: reg.max_iters must be positive");
  if (rollout_remap_every < 1) throw ConfigError("config: rollout.remap_every must be positive");
  if (diag_quad_n < 4 || diag_quad_n % 2 != 0) throw ConfigError("config: diag.quad_n must be even and at least 4");
  if (!(diag_eps > 0.0)) throw ConfigError("config: diag.eps must be positive");
  const double steps = time_T / frame_dt();
  if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
    throw ConfigError("config: time.T must be a multiple of time.dt * solver.remap_every");
  }
}

std::map<std::string, std::string> RunConfig::entries() const {
  return {{"grid.n", std::to_string(grid_n)},
          {"time.dt", format_double(time_dt)},
          {"time.T", format_double(time_T)},
          {"solver.remap_every", std::to_string(solver_remap_every)},
          {"ic.kind", ic_kind},
          {"ic.K", std::to_string(ic_K)},
          {"ic.seed", std::to_string(ic_seed)},
          {"ic.expr", ic_expr},
          {"lifter.kind", lifter_kind},
          {"lifter.window", std::to_string(lifter_window)},
          {"lifter.k_feat", std::to_string(lifter_k_feat)},
          {"lifter.ridge", format_double(lifter_ridge)},
          {"reg.lambda", format_double(reg_lambda)},
          {"reg.max_iters", std::to_string(reg_max_iters)},
          {"rollout.scheme", rollout_scheme},
          {"rollout.remap_every", std::to_string(rollout_remap_every)},
          {"diag.quad_n", std::to_string(diag_quad_n)},
          {"diag.eps", format_double(diag_eps)},
          {"out.dir", out_dir}};
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

namespace {

struct Node {
  enum Kind { Num, X, Y, Add, Sub, Mul, Div, Pow, Neg, Fn } kind;
  double value = 0.0;
  double (*fn)(double) = nullptr;
  std::unique_ptr<Node> a, b;

  double eval(double x, double y) const {
    switch (kind) {
      case Num:
        return value;
      case X:
        return x;
      case Y:
        return y;
      case Add:
        return a->eval(x, y) + b->eval(x, y);
      case Sub:
        return a->eval(x, y) - b->eval(x, y);
      case Mul:
        return a->eval(x, y) * b->eval(x, y);
      case Div:
        return a->eval(x, y) / b->eval(x, y);
      case Pow:
        return std::pow(a->eval(x, y), b->eval(x, y));
      case Neg:
        return -a->eval(x, y);
      case Fn:
        return fn(a->eval(x, y));
    }
    return 0.0;
  }
};

using NodePtr = std::unique_ptr<Node>;

NodePtr make(Node::Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_unique<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

// expr := term (('+'|'-') term)* ; term := unary (('*'|'/') unary)* ;
// unary := '-' unary | power ; power := atom ('^' unary)?
class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return n;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression '" + s_ + "': " + msg + " at position " + std::to_string(pos_));
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (eat('+')) {
        n = make(Node::Add, std::move(n), term());
      } else if (eat('-')) {
        n = make(Node::Sub, std::move(n), term());
      } else {
        return n;
      }
    }
  }
  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (eat('*')) {
        n = make(Node::Mul, std::move(n), unary());
      } else if (eat('/')) {
        n = make(Node::Div, std::move(n), unary());
      } else {
        return n;
      }
    }
  }
  NodePtr unary() {
    if (eat('-')) return make(Node::Neg, unary());
    if (eat('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr n = atom();
    if (eat('^')) return make(Node::Pow, std::move(n), unary());
    return n;
  }
  NodePtr atom() {
    skip();
    if (eat('(')) {
      NodePtr n = expr();
      if (!eat(')')) fail("missing ')'");
      return n;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      const char* first = s_.data() + pos_;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, s_.data() + s_.size(), v);
      if (ec != std::errc()) fail("bad number");
      pos_ += static_cast<std::size_t>(ptr - first);
      auto n = make(Node::Num);
      n->value = v;
      return n;
    }
    std::string name;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) name += s_[pos_++];
    if (name.empty()) fail("expected a value");
    if (name == "x") return make(Node::X);
    if (name == "y") return make(Node::Y);
    if (name == "pi") {
      auto n = make(Node::Num);
      n->value = std::numbers::pi;
      return n;
    }
    double (*fn)(double) = nullptr;
    if (name == "sin") fn = [](double v) { return std::sin(v); };
    if (name == "cos") fn = [](double v) { return std::cos(v); };
    if (name == "tan") fn = [](double v) { return std::tan(v); };
    if (name == "exp") fn = [](double v) { return std::exp(v); };
    if (name == "log") fn = [](double v) { return std::log(v); };
    if (name == "sqrt") fn = [](double v) { return std::sqrt(v); };
    if (name == "abs") fn = [](double v) { return std::abs(v); };
    if (name == "tanh") fn = [](double v) { return std::tanh(v); };
    if (!fn) fail("unknown name '" + name + "'");
    if (!eat('(')) fail("expected '(' after " + name);
    auto n = make(Node::Fn, expr());
    n->fn = fn;
    if (!eat(')')) fail("missing ')'");
    return n;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

ScalarSampler parse_expression(const std::string& text) {
  std::shared_ptr<const Node> root = Parser(text).parse();
  return [root](const Points& p) {
    Eigen::VectorXd out(p.cols());
    for (Eigen::Index k = 0; k < p.cols(); ++k) out(k) = root->eval(wrap_angle(p(0, k)), wrap_angle(p(1, k)));
    return out;
  };
}

}  // namespace dflow
