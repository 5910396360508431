#pragma once

// Command-line front end: preprocess, stats, audit, report, synth.
//
// Exit codes: 0 success, 1 usage or other failure, 2 schema/config error,
// 3 I/O error, 4 no successful cell (audit) or nothing to report (report).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "fairaudit/audit.hpp"
#include "fairaudit/config.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/ingestion.hpp"
#include "fairaudit/metrics.hpp"

namespace fairaudit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNoResults = 4;

namespace detail {

namespace fs = std::filesystem;

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& write) {
  auto out = open_out(path);
  write(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

struct PreprocessArgs {
  std::string initiations, dispositions, crime, outcome, schema, out;
};

inline int preprocess(const PreprocessArgs& a, std::ostream& log) {
  auto crime = parse_crime_type(a.crime);
  auto outcome = parse_outcome_kind(a.outcome);
  if (!crime) throw SchemaError("unknown crime type '" + a.crime + "'");
  if (!outcome) throw SchemaError("unknown outcome '" + a.outcome + "'");
  const IngestionSchema schema =
      a.schema.empty() ? IngestionSchema::cook_county() : IngestionSchema::from_config(KeyValueConfig::load(a.schema));

  auto init_in = open_in(a.initiations);
  auto disp_in = open_in(a.dispositions);
  const auto init = parse_charges(init_in, Source::initiation, schema);
  const auto disp = parse_charges(disp_in, Source::disposition, schema);
  const auto joined = join_cases(init.rows, disp.rows);
  const auto filtered = filter_and_label(joined.rows, *crime, *outcome, schema);

  std::vector<Reject> rejects = init.rejects;
  rejects.insert(rejects.end(), disp.rejects.begin(), disp.rejects.end());

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_file(dir / "cases.csv", [&](std::ostream& o) { write_cases(o, filtered.records); });
  write_file(dir / "rejects.csv", [&](std::ostream& o) { write_rejects(o, rejects); });
  write_file(dir / "funnel.csv",
             [&](std::ostream& o) { write_funnel(o, init, disp, joined.stats, filtered.funnel); });
  log << "preprocess: " << filtered.records.size() << " case records, " << rejects.size() << " rejected rows\n";
  return kExitOk;
}

inline int stats(const std::string& cases_path, const std::string& out_dir, int bin_width, std::ostream& log) {
  if (bin_width < 1) throw SchemaError("--bin-width must be >= 1");
  auto in = open_in(cases_path);
  const auto records = read_cases(in, cases_path);
  const fs::path dir(out_dir);
  ensure_dir(dir);
  const auto counts = arrest_counts(records);
  const auto cities = city_counts(records);
  write_file(dir / "arrest_counts.csv", [&](std::ostream& o) { write_arrest_counts_csv(o, counts); });
  write_file(dir / "outcome_rates.csv",
             [&](std::ostream& o) { write_outcome_rates_csv(o, group_outcome_rates(records)); });
  write_file(dir / "age_histogram.csv",
             [&](std::ostream& o) { write_age_histogram_csv(o, age_histogram(records, bin_width), bin_width); });
  write_file(dir / "city_counts.csv", [&](std::ostream& o) { write_city_counts_csv(o, cities); });
  write_file(dir / "summary.csv", [&](std::ostream& o) { write_stats_summary_csv(o, counts, cities); });
  log << "stats: " << records.size() << " case records\n";
  return kExitOk;
}

inline int audit(const std::string& config_path, const std::string& out_dir, std::uint64_t seed, int jobs,
                 std::ostream& out, std::ostream& log) {
  if (jobs < 1) throw SchemaError("--jobs must be >= 1");
  const auto cfg = KeyValueConfig::load(config_path);
  GridSpec grid = parse_grid(cfg);
  grid.options.master_seed = seed;
  grid.options.jobs = jobs;
  const DataRegistry registry = build_registry(grid, seed);

  const fs::path dir(out_dir);
  ensure_dir(dir / "cells");
  ensure_dir(dir / "traces");
  const AuditTable table = run_grid(grid.configs, registry, grid.options, [&](const CellOutcome& c) {
    if (c.ok()) log << "[ok] " << c.config.key() << '\n';
    else log << "[failed] " << c.config.key() << ": " << c.error << '\n';
  });
  for (const auto& [key, c] : table.cells) {
    write_file(dir / "cells" / (key + ".csv"), [&](std::ostream& o) { write_cell_csv(o, c); });
    if (c.ok() && c.cell->reduction && c.cell->constraints) {
      write_file(dir / "traces" / (key + ".csv"),
                 [&](std::ostream& o) { write_trace_csv(o, *c.cell->reduction, *c.cell->constraints); });
    }
  }
  if (table.succeeded() > 0) {
    write_file(dir / "table.txt", [&](std::ostream& o) { o << render_table(table, TableFormat::text); });
    write_file(dir / "table.csv", [&](std::ostream& o) { o << render_table(table, TableFormat::csv); });
  }
  out << "audit: " << table.cells.size() << " cells, " << table.succeeded() << " succeeded, " << table.failed()
      << " failed\n";
  return table.succeeded() > 0 ? kExitOk : kExitNoResults;
}

inline int report(const std::string& cells_dir, const std::string& format, const std::string& out_path,
                  std::ostream& out, std::ostream& log) {
  TableFormat fmt;
  if (format == "text") fmt = TableFormat::text;
  else if (format == "csv") fmt = TableFormat::csv;
  else throw SchemaError("--format must be text or csv");

  const fs::path dir(cells_dir);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("cannot read directory " + cells_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list directory " + cells_dir);
  std::sort(files.begin(), files.end());

  AuditTable table;
  for (const auto& f : files) {
    auto in = open_in(f);
    auto c = read_cell_csv(in, f.string());
    table.cells[c.config.key()] = std::move(c);
  }
  if (table.succeeded() == 0) {
    log << "report: no successful cells in " << cells_dir << '\n';
    return kExitNoResults;
  }
  const std::string rendered = render_table(table, fmt);
  if (out_path.empty()) out << rendered;
  else write_file(out_path, [&](std::ostream& o) { o << rendered; });
  return kExitOk;
}

inline int synth(const std::string& spec_path, std::uint64_t seed, const std::string& out_path, std::ostream& log) {
  const auto cfg = KeyValueConfig::load(spec_path);
  const SynthSpec spec = SynthSpec::from_config(cfg);
  cfg.require_all_used();
  std::vector<CaseRecord> records;
  try {
    records = generate_synthetic(spec, seed);
  } catch (const DataError& e) {
    throw SchemaError(spec_path + ": " + e.what());
  }
  write_file(out_path, [&](std::ostream& o) { write_cases(o, records); });
  log << "synth: " << records.size() << " case records\n";
  return kExitOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fairness audit of pretrial outcome prediction on court case records"};
  app.require_subcommand(1);

  detail::PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Join, filter and label raw initiation/disposition CSVs");
  preprocess->add_option("--initiations", pre.initiations, "Initiation (arrest) CSV")->required();
  preprocess->add_option("--dispositions", pre.dispositions, "Disposition CSV")->required();
  preprocess->add_option("--crime", pre.crime, "narcotics | theft")->required();
  preprocess->add_option("--outcome", pre.outcome, "charge-reduction | bond")->required();
  preprocess->add_option("--schema", pre.schema, "Column-binding config (defaults to the Cook County layout)");
  preprocess->add_option("--out", pre.out, "Output directory")->required();

  std::string cases_path, stats_out;
  int bin_width = 1;
  auto* stats = app.add_subcommand("stats", "Descriptive statistics of a case-record CSV");
  stats->add_option("--cases", cases_path, "Case-record CSV")->required();
  stats->add_option("--out", stats_out, "Output directory")->required();
  stats->add_option("--bin-width", bin_width, "Age histogram bin width")->capture_default_str();

  std::string config_path, audit_out;
  std::uint64_t seed = 0;
  int jobs = 1;
  auto* audit = app.add_subcommand("audit", "Run a study grid");
  audit->add_option("--config", config_path, "Grid config file")->required();
  audit->add_option("--out", audit_out, "Output directory")->required();
  audit->add_option("--seed", seed, "Master seed")->capture_default_str();
  audit->add_option("--jobs", jobs, "Cells run concurrently")->capture_default_str();

  std::string cells_dir, format = "text", report_out;
  auto* report = app.add_subcommand("report", "Render per-cell results as tables");
  report->add_option("--cells", cells_dir, "Directory of per-cell CSVs")->required();
  report->add_option("--format", format, "text | csv")->capture_default_str();
  report->add_option("--out", report_out, "Write to a file instead of standard output");

  std::string spec_path, synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate synthetic case records");
  synth->add_option("--spec", spec_path, "Synthetic spec file")->required();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output case-record CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*preprocess) return detail::preprocess(pre, err);
    if (*stats) return detail::stats(cases_path, stats_out, bin_width, err);
    if (*audit) return detail::audit(config_path, audit_out, seed, jobs, out, err);
    if (*report) return detail::report(cells_dir, format, report_out, out, err);
    if (*synth) return detail::synth(spec_path, synth_seed, synth_out, err);
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitSchema;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace fairaudit::cli
