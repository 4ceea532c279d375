// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <cmds/families.hpp>
#include <cmds/io.hpp>
#include <cmds/service.hpp>
#include <cmds/solver.hpp>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

using namespace cmds;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index q = 0; q < m.size(); ++q) m(q) = normal(rng);
  return m;
}

double mean_offdiag(const Matrix& D) {
  const auto n = static_cast<double>(D.rows());
  return D.sum() / (n * (n - 1.0));
}

DistanceTensor single(const Matrix& D) { return validate_distance_tensor({D}, HyperparameterGrid({0.0})); }

// Shared by criteria 1 and 4.
struct StaticInstance {
  Matrix points;
  DistanceTensor D;
  SolverSettings settings;
};

StaticInstance static_instance() {
  std::mt19937_64 rng(2024);
  StaticInstance s;
  s.points = random_matrix(rng, 10, 2);
  s.D = single(euclidean_distances(s.points));
  s.settings.lambda = 0.0;
  s.settings.init = InitStrategy::per_slice;
  return s;
}

Outcome criterion1() {
  const auto inst = static_instance();
  const auto t0 = Clock::now();
  const auto r = cmds::cmds(inst.D, inst.settings);
  const double secs = seconds_since(t0);
  const double stress = stress_per_slice(r.curves, inst.D)(0);
  const double resid = procrustes_align(inst.points, r.curves.slices[0]).residual;
  const double bound = 1e-4 * mean_offdiag(inst.D.slices[0]);
  return {stress <= 1e-6 && resid <= bound && secs < 1.0,
          fmt("stress=%.3g (<=1e-6), procrustes=%.3g (<=%.3g), %.3fs (<1s)", stress, resid, bound, secs)};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  const double lambdas[] = {0.0, 1.0, 100.0};
  for (int p = 0; p < 20; ++p) {
    const int n = std::uniform_int_distribution<int>(3, 20)(rng);
    const int T = std::uniform_int_distribution<int>(1, 15)(rng);
    const int ambient = std::uniform_int_distribution<int>(1, 5)(rng);
    std::vector<Matrix> slices;
    const Matrix base = random_matrix(rng, n, ambient);
    for (int k = 0; k < T; ++k) slices.push_back(euclidean_distances(base + random_matrix(rng, n, ambient, 0.3)));
    const auto D = validate_distance_tensor(slices, HyperparameterGrid::linspace(static_cast<std::size_t>(T)));
    SolverSettings s;
    s.dim = 1 + p % 2;
    s.lambda = lambdas[p % 3];
    s.init = p % 4 == 0 ? InitStrategy::aggregated : InitStrategy::random;
    s.seed = static_cast<std::uint64_t>(p);
    s.max_outer = 30;
    s.max_inner = 20;
    s.tol = 1e-10;
    s.trace_inner = true;
    const auto r = cmds::cmds(D, s);
    for (const auto* trace : {&r.inner_cost_trace, &r.cost_trace})
      for (std::size_t q = 1; q < trace->size(); ++q) {
        worst = std::max(worst, (*trace)[q] - (*trace)[q - 1]);
        ++steps;
      }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 30.0,
          fmt("largest cost increase %.3g over %zu steps (<=1e-10), %.2fs (<30s)", worst, steps, secs)};
}

Outcome criterion3() {
  std::mt19937_64 rng(3);
  double worst_gap = std::numeric_limits<double>::infinity();
  double worst_touch = 0.0;
  for (int q = 0; q < 200; ++q) {
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const int T = std::uniform_int_distribution<int>(1, 8)(rng);
    const int d = std::uniform_int_distribution<int>(1, 3)(rng);
    std::vector<Matrix> slices;
    for (int k = 0; k < T; ++k) slices.push_back(euclidean_distances(random_matrix(rng, n, 4)));
    const auto D = validate_distance_tensor(slices, HyperparameterGrid::linspace(static_cast<std::size_t>(T)));
    const double lambda = q % 2 ? 0.0 : std::exp(std::uniform_real_distribution<double>(-3, 3)(rng));
    const auto p = make_problem(D, nullptr, lambda);
    EmbeddingCurves X(D.grid, static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    for (auto& s : X.slices) s = random_matrix(rng, n, d);
    const auto i = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, n - 1)(rng));
    const Matrix z = X.curve(i);
    const auto H = surrogate_points(X, p, i, rng);
    const Matrix x = random_matrix(rng, T, d, 2.0);
    worst_gap = std::min(worst_gap, single_curve_upper_bound(X, p, i, x, z, H) - single_curve_cost(X, p, i, x));
    worst_touch = std::max(worst_touch, std::abs(single_curve_upper_bound(X, p, i, z, z, H) - single_curve_cost(X, p, i, z)));
  }
  return {worst_gap >= -1e-10 && worst_touch <= 1e-10,
          fmt("min u(x,z)-f(x)=%.3g (>=-1e-10), max |u(z,z)-f(z)|=%.3g (<=1e-10)", worst_gap, worst_touch)};
}

Outcome criterion4() {
  const auto inst = static_instance();
  const auto r = cmds::cmds(inst.D, inst.settings);
  const double bound = 1e-4 * static_cast<double>(inst.D.N()) * mean_offdiag(inst.D.slices[0]);
  const double worst_resid = r.final_residuals.array().isNaN().any() ? std::numeric_limits<double>::infinity()
                                                                     : r.final_residuals.maxCoeff();

  // Analytic gradient against central differences at random configurations.
  std::mt19937_64 rng(4);
  double worst_rel = 0.0;
  for (int q = 0; q < 50; ++q) {
    const std::size_t T = 1 + static_cast<std::size_t>(q % 5);
    std::vector<Matrix> slices;
    for (std::size_t k = 0; k < T; ++k) slices.push_back(euclidean_distances(random_matrix(rng, 10, 3)));
    const auto D = validate_distance_tensor(slices, HyperparameterGrid::linspace(T));
    const auto p = make_problem(D, nullptr, q % 2 ? 0.0 : 2.0);
    EmbeddingCurves X(D.grid, 10, 2);
    for (auto& s : X.slices) s = random_matrix(rng, 10, 2);
    const std::size_t i = static_cast<std::size_t>(q) % 10;
    const Matrix x = X.curve(i);
    Matrix fd(x.rows(), x.cols());
    for (Eigen::Index e = 0; e < x.size(); ++e) {
      const double h = 1e-5 * std::max(1.0, std::abs(x(e)));
      Matrix xp = x, xm = x;
      xp(e) += h;
      xm(e) -= h;
      fd(e) = (single_curve_cost(X, p, i, xp) - single_curve_cost(X, p, i, xm)) / (2.0 * h);
    }
    const double analytic = subgradient_residual(X, p, i).norm;
    worst_rel = std::max(worst_rel, std::abs(analytic - fd.norm()) / std::max(fd.norm(), 1e-300));
  }
  return {worst_resid <= bound && worst_rel <= 1e-5,
          fmt("max residual %.3g (<=%.3g), gradient vs finite differences rel err %.3g (<=1e-5)", worst_resid, bound,
              worst_rel)};
}

Outcome criterion5() {
  ClusterToyConfig cfg;
  const auto D = collapsing_clusters_toy(cfg).distances;
  const Matrix M = roughness_for_grid(D.grid).M;
  const auto init = init_per_slice(D, 2);
  const double S0 = stress_per_slice(init, D).sum();
  const double R0 = roughness_per_curve(init, M).sum();
  SolverSettings s;
  s.lambda = 0.0;
  s.init = InitStrategy::per_slice;
  const auto free = cmds::cmds(D, s, init);
  s.lambda = 1e6 * S0 / R0;
  const auto stiff = cmds::cmds(D, s, init);
  const double r_free = roughness_per_curve(free.curves, M).sum();
  const double r_stiff = roughness_per_curve(stiff.curves, M).sum();
  return {r_stiff <= 1e-6 * r_free,
          fmt("lambda=%.3g, roughness %.3g vs %.3g at lambda=0 (ratio %.3g <= 1e-6)", s.lambda, r_stiff, r_free,
              r_stiff / r_free)};
}

Outcome criterion6() {
  const auto t0 = Clock::now();
  const auto D = mixed_dimensionality_family(6, 30, 11);
  SolverSettings s;
  s.lambda = 0.0;
  s.init = InitStrategy::per_slice;
  const auto r = cmds::cmds(D, s);
  const Vector stress = stress_per_slice(r.curves, D);
  std::vector<double> idx, st;
  for (Eigen::Index k = 0; k < stress.size(); ++k) {
    idx.push_back(static_cast<double>(k));
    st.push_back(stress(k));
  }
  const double rho = spearman(idx, st);
  const double secs = seconds_since(t0);
  return {stress(0) <= 1e-6 && rho >= 0.9 && secs < 60.0,
          fmt("stress at alpha=0 %.3g (<=1e-6), spearman %.3f (>=0.9), %.2fs (<60s)", stress(0), rho, secs)};
}

Outcome criterion7() {
  const int seeds = 10;
  const std::size_t T = 11;
  std::vector<std::vector<double>> quality(T);
  double min_ratio = std::numeric_limits<double>::infinity();
  for (int seed = 0; seed < seeds; ++seed) {
    ClusterToyConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto toy = collapsing_clusters_toy(cfg);
    SolverSettings s;
    s.dim = 1;
    s.lambda = 1.0;
    s.init = InitStrategy::aggregated;
    const auto r = cmds::cmds(toy.distances, s);
    const double first = cluster_quality(r.curves.slices.front(), toy.labels);
    const double last = cluster_quality(r.curves.slices.back(), toy.labels);
    min_ratio = std::min(min_ratio, first / last);
    const auto labels = kmeans_baseline(r.curves.slices.front(), cfg.n_clusters, static_cast<std::uint64_t>(seed));
    for (std::size_t k = 0; k < T; ++k) quality[k].push_back(cluster_quality(r.curves.slices[k], labels));
  }
  std::vector<double> idx, med;
  for (std::size_t k = 0; k < T; ++k) {
    auto q = quality[k];
    std::sort(q.begin(), q.end());
    idx.push_back(static_cast<double>(k));
    med.push_back(0.5 * (q[q.size() / 2 - 1] + q[q.size() / 2]));
  }
  const double rho = spearman(idx, med);
  return {min_ratio >= 5.0 && rho <= -0.8,
          fmt("quality ratio alpha=0/alpha=1 min over %d seeds %.3g (>=5), spearman of median k-means quality %.3f "
              "(<=-0.8)",
              seeds, min_ratio, rho)};
}

Outcome criterion8() {
  std::mt19937_64 rng(8);
  const std::size_t Ta = 4, Tb = 5;
  const Matrix M = composite_roughness_matrix(Ta, Tb).M;
  double worst = 0.0;
  for (int q = 0; q < 100; ++q) {
    const int d = 1 + q % 3;
    const Matrix x = random_matrix(rng, static_cast<Eigen::Index>(Ta * Tb), d, std::exp(q % 7 - 3.0));
    auto at = [&](std::size_t a, std::size_t b) { return x.row(static_cast<Eigen::Index>(b * Ta + a)); };
    double brute = 0.0;
    for (std::size_t b = 0; b < Tb; ++b)
      for (std::size_t a = 1; a + 1 < Ta; ++a) brute += (at(a - 1, b) - 2.0 * at(a, b) + at(a + 1, b)).squaredNorm();
    for (std::size_t a = 0; a < Ta; ++a)
      for (std::size_t b = 1; b + 1 < Tb; ++b) brute += (at(a, b - 1) - 2.0 * at(a, b) + at(a, b + 1)).squaredNorm();
    worst = std::max(worst, std::abs(roughness(x, M) - brute) / brute);
  }
  return {worst <= 1e-12, fmt("max relative error %.3g over 100 random 4x5 grids (<=1e-12)", worst)};
}

Outcome criterion9() {
  std::mt19937_64 rng(9);
  double worst = -std::numeric_limits<double>::infinity();
  for (int inst = 0; inst < 10; ++inst) {
    const Matrix D = euclidean_distances(random_matrix(rng, 3, 2));
    const auto T = single(D);
    SolverSettings s;
    s.dim = 1;
    s.lambda = 0.0;
    s.tol = 1e-12;
    s.max_outer = 1000;
    s.max_inner = 1000;
    const double solver_cost = cmds::cmds(T, s).final_cost();
    // x_0 = 0 by translation, x_1 >= 0 by reflection.
    const double box = 2.0 * D.maxCoeff();
    const double h = 1e-3;
    const auto steps = static_cast<long>(std::ceil(box / h));
    double best = std::numeric_limits<double>::infinity();
    const double d01 = D(0, 1), d02 = D(0, 2), d12 = D(1, 2);
    for (long a = 0; a <= steps; ++a) {
      const double x1 = a * h;
      const double r01 = x1 - d01;
      const double c01 = r01 * r01;
      for (long b = -steps; b <= steps; ++b) {
        const double x2 = b * h;
        const double r02 = std::abs(x2) - d02;
        const double r12 = std::abs(x2 - x1) - d12;
        best = std::min(best, 2.0 * (c01 + r02 * r02 + r12 * r12));
      }
    }
    worst = std::max(worst, solver_cost - best);
  }
  return {worst <= 1e-4, fmt("largest grid-search improvement over the solver %.3g (<=1e-4) on 10 instances", worst)};
}

Outcome criterion10() {
  std::mt19937_64 rng(10);
  const Matrix P1 = random_matrix(rng, 12, 3), P2 = random_matrix(rng, 12, 6);
  const auto D = weighted_mixture(euclidean_distances(P1), euclidean_distances(P2), HyperparameterGrid::linspace(5));

  // All-ones weights through the weighted path.
  SolverSettings s;
  s.lambda = 2.0;
  s.max_outer = 50;
  const auto init = initialize(D, 2, InitStrategy::aggregated, 0);
  const WeightTensor ones = build_weights(D, VariantSpec{});
  const auto raw = cmds::cmds(D, s, init, nullptr);
  const auto weighted = cmds::cmds(D, s, init, &ones);
  bool identical = raw.cost_trace == weighted.cost_trace;
  for (std::size_t k = 0; k < D.T(); ++k) identical = identical && raw.curves.slices[k] == weighted.curves.slices[k];

  // Sammon weights are homogeneous of degree -1: scaling D by 10 (and lambda by 1/10)
  // scales the optimum by 10 and its weighted stress by 10.
  std::vector<Matrix> scaled;
  for (const auto& m : D.slices) scaled.push_back(10.0 * m);
  const auto D10 = validate_distance_tensor(scaled, D.grid, D.labels);
  SolverSettings sam;
  sam.variant.tag = Variant::sammon;
  sam.lambda = 0.5;
  sam.tol = 1e-13;
  sam.max_outer = 5000;
  const auto a = cmds::cmds(D, sam);
  sam.lambda = 0.05;
  const auto b = cmds::cmds(D10, sam);
  const double sa = weighted_stress_per_slice(a.curves, D, build_weights(D, sam.variant)).sum();
  const double sb = weighted_stress_per_slice(b.curves, D10, build_weights(D10, sam.variant)).sum();
  const double rel = std::abs(sb - 10.0 * sa) / (10.0 * sa);
  return {identical && rel <= 1e-8,
          fmt("unit weights bit-identical to raw: %s; sammon stress %.12g vs 10 x %.12g (rel err %.3g <= 1e-8)",
              identical ? "yes" : "no", sb, sa, rel)};
}

void run_shell(const std::string& cmd) {
  if (std::system(cmd.c_str()) == -1) std::perror("system");
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(CMDS_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Asks the kernel for an unused port and releases it again.
int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  int port = 0;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0 &&
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0)
    port = ntohs(addr.sin_port);
  ::close(fd);
  return port;
}

Outcome criterion11() {
  const fs::path dir = fs::temp_directory_path() / "cmds_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  std::vector<std::string> problems;

  if (run_cli("family mixed-dim --n 15 --steps 6 --seed 5 --output " + path("d.json")) != 0)
    problems.push_back("family command failed");
  const std::string embed = "embed --input " + path("d.json") + " --lambda 0.7 --init random --seed 31 --output ";
  const int ea = run_cli(embed + path("a.json"));
  const int eb = run_cli(embed + path("b.json"));
  if (ea != 0 || eb != 0) problems.push_back("embed exit codes " + std::to_string(ea) + "/" + std::to_string(eb));
  const std::string cli_bytes = fs::exists(path("a.json")) ? read_file(path("a.json")) : "";
  const bool cli_identical = !cli_bytes.empty() && cli_bytes == read_file(path("b.json"));
  if (!cli_identical) problems.push_back("CLI runs differ");

  // Save/load round trips.
  bool round_trip = false;
  try {
    const auto D = load_distance_tensor(path("d.json"));
    save_distance_tensor(path("d2.json"), D);
    const auto E = load_embedding(path("a.json"));
    save_embedding(path("a2.json"), E);
    const auto D2 = load_distance_tensor(path("d2.json"));
    round_trip = read_file(path("d2.json")) == read_file(path("d.json")) && read_file(path("a2.json")) == cli_bytes;
    for (std::size_t k = 0; k < D.T(); ++k) round_trip = round_trip && D2.slices[k] == D.slices[k];
  } catch (const std::exception& e) {
    problems.push_back(e.what());
  }
  if (!round_trip) problems.push_back("round trip not bit-exact");

  // The serve subcommand, driven over HTTP.
  bool serve_identical = false;
  const int port = free_port();
  run_shell(("sh -c '" + std::string(CMDS_CLI_PATH) + " serve --host 127.0.0.1 --port " + std::to_string(port) +
               " --input " + path("d.json") + " >/dev/null 2>&1 & echo $! > " + path("pid") + "'")
                  .c_str());
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);
  bool up = false;
  for (int t = 0; t < 200 && !up; ++t) {
    if (auto res = client.Get("/tensor"); res && res->status == 200) up = true;
    else std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  if (!up) {
    problems.push_back("server did not come up");
  } else {
    auto posted = client.Post("/solve", R"({"lambda": 0.7, "init": "random", "seed": 31})", "application/json");
    if (!posted || posted->status != 202) {
      problems.push_back("POST /solve failed");
    } else {
      const std::string id = Json::parse(posted->body)["job_id"];
      std::string status = "queued";
      for (int t = 0; t < 1200 && (status == "queued" || status == "running"); ++t) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (auto res = client.Get("/status/" + id)) status = Json::parse(res->body)["status"];
      }
      auto emb = client.Get("/embedding/" + id);
      serve_identical = status == "done" && emb && emb->status == 200 && emb->body == cli_bytes;
      if (!serve_identical) problems.push_back("serve output differs from CLI (status " + status + ")");
    }
  }
  run_shell(("kill $(cat " + path("pid") + ") 2>/dev/null").c_str());
  fs::remove_all(dir);

  std::string detail = fmt("CLI byte-identical: %s; round trips bit-exact: %s; serve == CLI: %s",
                           cli_identical ? "yes" : "no", round_trip ? "yes" : "no", serve_identical ? "yes" : "no");
  for (const auto& p : problems) detail += "; " + p;
  return {cli_identical && round_trip && serve_identical, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"static MDS reduction", criterion1},
      {"monotone descent", criterion2},
      {"upper-bound property", criterion3},
      {"first-order optimality", criterion4},
      {"lambda limit gives straight curves", criterion5},
      {"inherent dimensionality curve", criterion6},
      {"declustering along alpha", criterion7},
      {"composite penalty", criterion8},
      {"small-instance grid search", criterion9},
      {"variant consistency", criterion10},
      {"determinism and formats", criterion11},
  };
  int failures = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2zu  %-36s %s\n", o.pass ? "PASS" : "FAIL", c + 1, criteria[c].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
