#include "bpfa/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bpfa {

namespace {

constexpr const char* kMagic = "bpfa-checkpoint";
constexpr int kVersion = 1;

void write_value(std::ofstream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

void write_vector(std::ofstream& out, const char* name, const Vector& v) {
  out << name;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out << ' ';
    write_value(out, v[i]);
  }
  out << '\n';
}

void write_matrix_rows(std::ofstream& out, const char* name, const Matrix& m) {
  out << name << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      write_value(out, m(r, c));
    }
    out << '\n';
  }
}

void expect(std::ifstream& in, const std::string& token, const std::string& path) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw std::runtime_error("malformed checkpoint (" + path + "): expected '" + token + "'");
  }
}

Vector read_vector(std::ifstream& in, const std::string& name, Eigen::Index n,
                   const std::string& path) {
  expect(in, name, path);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(in >> v[i])) throw std::runtime_error("truncated checkpoint: " + path);
  }
  return v;
}

Matrix read_matrix_rows(std::ifstream& in, const std::string& name, Eigen::Index rows,
                        Eigen::Index cols, const std::string& path) {
  expect(in, name, path);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> m(r, c))) throw std::runtime_error("truncated checkpoint: " + path);
    }
  }
  return m;
}

double read_scalar(std::ifstream& in, const std::string& name, const std::string& path) {
  expect(in, name, path);
  double v = 0.0;
  if (!(in >> v)) throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const GlobalVariationalState& state, long iteration,
                     std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << kMagic << ' ' << kVersion << "\nkind variational\n";
  out << "K " << state.feature_count() << "\nD " << state.dim() << "\n";
  out << "iteration " << iteration << "\nseed " << seed << "\n";
  write_vector(out, "a_k", state.a_k);
  write_vector(out, "b_k", state.b_k);
  out << "c ";
  write_value(out, state.c);
  out << "\nd ";
  write_value(out, state.d);
  out << "\ne ";
  write_value(out, state.e);
  out << "\nf ";
  write_value(out, state.f);
  out << "\n";
  write_vector(out, "tau_k", state.tau_k);
  write_matrix_rows(out, "mu", state.mu);
}

void save_chain_checkpoint(const std::string& path, const ChainState& chain, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const int K = chain.beta.feature_count();
  const int N = static_cast<int>(chain.psi.size());
  out << kMagic << ' ' << kVersion << "\nkind chain\n";
  out << "K " << K << "\nD " << chain.beta.dim() << "\nN " << N << "\n";
  out << "iteration " << chain.iteration << "\nseed " << seed << "\n";
  write_vector(out, "pi", chain.beta.pi);
  out << "gamma_obs ";
  write_value(out, chain.beta.gamma_obs);
  out << "\ngamma_w ";
  write_value(out, chain.beta.gamma_w);
  out << "\n";
  write_matrix_rows(out, "Phi", chain.beta.Phi);
  out << "z\n";
  for (const LocalSample& loc : chain.psi) {
    for (int k = 0; k < K; ++k) {
      if (k) out << ' ';
      out << static_cast<int>(loc.z[static_cast<std::size_t>(k)]);
    }
    out << '\n';
  }
  out << "w\n";
  for (const LocalSample& loc : chain.psi) {
    for (int k = 0; k < K; ++k) {
      if (k) out << ' ';
      write_value(out, loc.w[k]);
    }
    out << '\n';
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  expect(in, kMagic, path);
  int version = 0;
  in >> version;
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version: " + path);
  expect(in, "kind", path);
  std::string kind;
  in >> kind;

  Checkpoint ck;
  if (kind == "variational") {
    ck.kind = Checkpoint::Kind::kVariational;
    const auto K = static_cast<Eigen::Index>(read_scalar(in, "K", path));
    const auto D = static_cast<Eigen::Index>(read_scalar(in, "D", path));
    ck.iteration = static_cast<long>(read_scalar(in, "iteration", path));
    ck.seed = static_cast<std::uint64_t>(read_scalar(in, "seed", path));
    ck.state.a_k = read_vector(in, "a_k", K, path);
    ck.state.b_k = read_vector(in, "b_k", K, path);
    ck.state.c = read_scalar(in, "c", path);
    ck.state.d = read_scalar(in, "d", path);
    ck.state.e = read_scalar(in, "e", path);
    ck.state.f = read_scalar(in, "f", path);
    ck.state.tau_k = read_vector(in, "tau_k", K, path);
    ck.state.mu = read_matrix_rows(in, "mu", K, D, path);
  } else if (kind == "chain") {
    ck.kind = Checkpoint::Kind::kChain;
    const auto K = static_cast<Eigen::Index>(read_scalar(in, "K", path));
    const auto D = static_cast<Eigen::Index>(read_scalar(in, "D", path));
    const auto N = static_cast<Eigen::Index>(read_scalar(in, "N", path));
    ck.chain.iteration = static_cast<long>(read_scalar(in, "iteration", path));
    ck.seed = static_cast<std::uint64_t>(read_scalar(in, "seed", path));
    ck.iteration = ck.chain.iteration;
    ck.chain.beta.pi = read_vector(in, "pi", K, path);
    ck.chain.beta.gamma_obs = read_scalar(in, "gamma_obs", path);
    ck.chain.beta.gamma_w = read_scalar(in, "gamma_w", path);
    ck.chain.beta.Phi = read_matrix_rows(in, "Phi", K, D, path);
    expect(in, "z", path);
    ck.chain.psi.resize(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) {
      auto& loc = ck.chain.psi[static_cast<std::size_t>(i)];
      loc.z.resize(static_cast<std::size_t>(K));
      for (Eigen::Index k = 0; k < K; ++k) {
        int bit = 0;
        if (!(in >> bit)) throw std::runtime_error("truncated checkpoint: " + path);
        loc.z[static_cast<std::size_t>(k)] = bit ? 1 : 0;
      }
    }
    expect(in, "w", path);
    for (Eigen::Index i = 0; i < N; ++i) {
      auto& loc = ck.chain.psi[static_cast<std::size_t>(i)];
      loc.w.resize(K);
      for (Eigen::Index k = 0; k < K; ++k) {
        if (!(in >> loc.w[k])) throw std::runtime_error("truncated checkpoint: " + path);
      }
    }
  } else {
    throw std::runtime_error("unknown checkpoint kind: " + kind);
  }
  return ck;
}

}  // namespace bpfa
