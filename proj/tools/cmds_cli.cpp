// Command-line front end: build distance families, embed them, report
// metrics, or serve solves over HTTP.
//
// Exit codes: 0 success, 2 invalid input, 3 solve finished without converging.

#include <cmds/families.hpp>
#include <cmds/io.hpp>
#include <cmds/service.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitNotConverged = 3;

using cmds::Error;
using cmds::ErrorCode;
using cmds::Json;
using cmds::Matrix;

std::vector<Matrix> read_graphs(const std::string& path, std::vector<std::string>* subjects,
                                std::vector<std::string>* nodes) {
  const Json doc = cmds::detail::parse_text(cmds::read_file(path), path);
  const Json& graphs = cmds::detail::require(doc, "graphs", path);
  if (!graphs.is_array() || graphs.empty()) throw Error(ErrorCode::ParseError, path + ": \"graphs\" must be a non-empty array");
  const auto n = static_cast<Eigen::Index>(graphs.front().size());
  std::vector<Matrix> out;
  for (std::size_t s = 0; s < graphs.size(); ++s)
    out.push_back(cmds::detail::matrix_from_json(graphs[s], n, n, path + ", graph " + std::to_string(s)));
  if (subjects && doc.contains("subjects")) *subjects = doc.at("subjects").get<std::vector<std::string>>();
  if (nodes && doc.contains("nodes")) *nodes = doc.at("nodes").get<std::vector<std::string>>();
  return out;
}

std::vector<int> read_groups(const std::string& path) {
  const Json doc = cmds::detail::parse_text(cmds::read_file(path), path);
  try {
    if (doc.is_array()) return doc.get<std::vector<int>>();
    return cmds::detail::get_as<std::vector<int>>(doc, "groups", path);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

// Grid k / steps for k = 0..steps-1, inside [0, 1).
cmds::HyperparameterGrid open_unit_grid(int steps) {
  std::vector<double> a(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) a[static_cast<std::size_t>(k)] = static_cast<double>(k) / steps;
  return cmds::HyperparameterGrid(std::move(a));
}

void print_metrics(const Json& report) {
  const auto labels = report.at("labels").get<std::vector<std::string>>();
  const auto stress = report.at("stress_per_slice").get<std::vector<double>>();
  const auto rough = report.at("roughness_per_curve").get<std::vector<double>>();
  const auto inst = report.at("instability").get<std::vector<double>>();
  std::printf("slice  stress\n");
  for (std::size_t k = 0; k < stress.size(); ++k) std::printf("%5zu  %.10g\n", k, stress[k]);
  std::printf("\nitem                 roughness        instability\n");
  for (std::size_t i = 0; i < labels.size(); ++i)
    std::printf("%-20s %-16.10g %.10g\n", labels[i].c_str(), rough[i], inst[i]);
  std::printf("\nvariant     %s\n", report.at("variant").get<std::string>().c_str());
  std::printf("lambda      %.10g\n", report.at("lambda").get<double>());
  std::printf("stress      %.17g\n", report.at("stress_total").get<double>());
  std::printf("roughness   %.17g\n", report.at("roughness_total").get<double>());
  std::printf("total cost  %.17g\n", report.at("total_cost").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous multidimensional scaling over hyperparameter grids"};
  app.require_subcommand(1);

  // embed
  auto* embed = app.add_subcommand("embed", "Embed a distance tensor as smooth curves");
  std::string input, output, groups_path, variant = "raw", init = "aggregated";
  cmds::SolverSettings settings;
  std::optional<double> lmds_w, lmds_dinf;
  embed->add_option("--input", input, "Distance tensor file")->required();
  embed->add_option("--output", output, "Embedding file to write")->required();
  embed->add_option("--dim", settings.dim, "Embedding dimension");
  embed->add_option("--lambda", settings.lambda, "Roughness weight");
  embed->add_option("--variant", variant, "raw|sammon|elastic|unfolding|lmds");
  embed->add_option("--init", init, "per-slice|aggregated|random");
  embed->add_option("--tol", settings.tol, "Convergence tolerance");
  embed->add_option("--max-outer", settings.max_outer, "Maximum sweeps over curves");
  embed->add_option("--max-inner", settings.max_inner, "Maximum iterations per curve");
  embed->add_option("--seed", settings.seed, "Random seed");
  embed->add_option("--lmds-k", settings.variant.lmds_k, "Local MDS neighbourhood size");
  embed->add_option("--lmds-w", lmds_w, "Local MDS off-neighbourhood weight (default 1/N)");
  embed->add_option("--lmds-dinf", lmds_dinf, "Local MDS substitute distance (default 2 x max distance)");
  embed->add_option("--groups", groups_path, "Group labels for unfolding (JSON array)");

  // family
  auto* family = app.add_subcommand("family", "Build a distance tensor from a hyperparameter family");
  family->require_subcommand(1);
  std::string family_out;
  int steps = 11;

  auto* mixture = family->add_subcommand("mixture", "sqrt(alpha D1^2 + (1 - alpha) D2^2)");
  std::string d1_path, d2_path;
  mixture->add_option("--d1", d1_path, "Distance tensor file (first slice used)")->required();
  mixture->add_option("--d2", d2_path, "Distance tensor file (first slice used)")->required();
  mixture->add_option("--steps", steps, "Grid points on [0, 1]");

  auto* toy = family->add_subcommand("toy", "Collapsing Gaussian clusters");
  cmds::ClusterToyConfig toy_cfg;
  toy->add_option("--clusters", toy_cfg.n_clusters);
  toy->add_option("--per-cluster", toy_cfg.points_per_cluster);
  toy->add_option("--ambient-dim", toy_cfg.ambient_dim);
  toy->add_option("--steps", toy_cfg.T);
  toy->add_option("--noise", toy_cfg.noise_sd);
  toy->add_option("--seed", toy_cfg.seed);

  auto* hclust = family->add_subcommand("hclust", "Centroid-linkage hierarchy levels");
  std::string points_path;
  std::optional<double> eps;
  hclust->add_option("--points", points_path, "JSON {\"points\": [[...]], \"labels\": [...]}")->required();
  hclust->add_option("--eps", eps, "Within-cluster distance");

  auto* hamming = family->add_subcommand("threshold-hamming", "Hamming distances between thresholded graphs");
  std::string graphs_path;
  hamming->add_option("--graphs", graphs_path, "JSON {\"graphs\": [...], \"subjects\": [...]}")->required();
  hamming->add_option("--steps", steps, "Quantiles k/steps");

  auto* consensus = family->add_subcommand("consensus-paths", "Shortest paths on thresholded consensus graphs");
  consensus->add_option("--graphs", graphs_path, "JSON {\"graphs\": [...], \"nodes\": [...]}")->required();
  consensus->add_option("--steps", steps, "Thresholds k/steps");

  auto* mixed = family->add_subcommand("mixed-dim", "Mixture of 2-D and 12-D point clouds");
  int mixed_n = 30;
  std::uint64_t mixed_seed = 0;
  mixed->add_option("--n", mixed_n);
  mixed->add_option("--steps", steps);
  mixed->add_option("--seed", mixed_seed);

  for (auto* sub : {mixture, toy, hclust, hamming, consensus, mixed})
    sub->add_option("--output", family_out, "Distance tensor file to write")->required();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Report distortion, roughness and stability");
  std::string embedding_path, report_path;
  metrics->add_option("--embedding", embedding_path)->required();
  metrics->add_option("--input", input)->required();
  metrics->add_option("--report", report_path, "Also write the report as JSON");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve solves over HTTP");
  int port = 8080;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--input", input)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*embed) {
      settings.variant.tag = cmds::parse_variant(variant);
      settings.init = cmds::parse_init(init);
      settings.variant.lmds_w = lmds_w;
      settings.variant.lmds_d_inf = lmds_dinf;
      if (!groups_path.empty()) settings.variant.groups = read_groups(groups_path);
      settings.validate();
      const auto D = cmds::load_distance_tensor(input);
      const auto file = cmds::run_embedding(D, settings);
      cmds::save_embedding(output, file);
      if (!file.provenance.converged) {
        std::cerr << "warning: not converged after " << settings.max_outer << " sweeps\n";
        return kExitNotConverged;
      }
      return 0;
    }

    if (*family) {
      cmds::DistanceTensor D;
      if (*mixture) {
        if (steps < 1) throw Error(ErrorCode::InvalidArgument, "--steps must be >= 1");
        const auto a = cmds::load_distance_tensor(d1_path);
        const auto b = cmds::load_distance_tensor(d2_path);
        D = cmds::weighted_mixture(a.slices.front(), b.slices.front(),
                                   cmds::HyperparameterGrid::linspace(static_cast<std::size_t>(steps)), a.labels);
      } else if (*toy) {
        D = cmds::collapsing_clusters_toy(toy_cfg).distances;
      } else if (*hclust) {
        const Json doc = cmds::detail::parse_text(cmds::read_file(points_path), points_path);
        const Json& pts = cmds::detail::require(doc, "points", points_path);
        if (!pts.is_array() || pts.empty() || !pts.front().is_array())
          throw Error(ErrorCode::ParseError, points_path + ": \"points\" must be a non-empty array of rows");
        const Matrix P = cmds::detail::matrix_from_json(pts, static_cast<Eigen::Index>(pts.size()),
                                                        static_cast<Eigen::Index>(pts.front().size()), points_path);
        std::vector<std::string> labels;
        if (doc.contains("labels")) labels = doc.at("labels").get<std::vector<std::string>>();
        const auto fam = cmds::hclust_distance_family(P, eps, labels);
        if (fam.duplicate_points) std::cerr << "warning: duplicate points in " << points_path << "\n";
        D = fam.distances;
      } else if (*hamming) {
        if (steps < 1) throw Error(ErrorCode::InvalidArgument, "--steps must be >= 1");
        std::vector<std::string> subjects;
        const auto graphs = read_graphs(graphs_path, &subjects, nullptr);
        D = cmds::threshold_hamming_family(graphs, open_unit_grid(steps), subjects);
      } else if (*consensus) {
        if (steps < 1) throw Error(ErrorCode::InvalidArgument, "--steps must be >= 1");
        std::vector<std::string> nodes;
        const auto graphs = read_graphs(graphs_path, nullptr, &nodes);
        D = cmds::consensus_shortest_path_family(graphs, open_unit_grid(steps), nodes);
      } else if (*mixed) {
        D = cmds::mixed_dimensionality_family(mixed_seed, mixed_n, steps);
      }
      cmds::save_distance_tensor(family_out, D);
      return 0;
    }

    if (*metrics) {
      const auto file = cmds::load_embedding(embedding_path);
      const auto D = cmds::load_distance_tensor(input);
      const Json report = cmds::metrics_report(file, D);
      print_metrics(report);
      if (!report_path.empty()) cmds::write_file(report_path, cmds::dump(report));
      return 0;
    }

    if (*serve) {
      auto D = cmds::load_distance_tensor(input);
      cmds::EmbeddingService service(std::move(D));
      httplib::Server server;
      service.mount(server);
      std::cerr << "serving on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) throw Error(ErrorCode::InvalidArgument, "cannot listen on port " + std::to_string(port));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return 0;
}
