#include "dcehier/studyio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string_view>

#include "json.hpp"

namespace dcehier {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view tok, const std::string& where) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  while (ptr < e && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
  if (ec != std::errc{} || ptr != e)
    throw StudyFormatError(where + ": malformed number '" + std::string(tok) +
                           "'");
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StudyFormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string_view> split_csv(const std::string& line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.emplace_back(line.data() + start, i - start);
      start = i + 1;
    }
  }
  return out;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StudyFormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw StudyFormatError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StudyFormatError("cannot write " + path.string());
  out << text;
  if (!out) throw StudyFormatError("write failed for " + path.string());
}

AifParams aif_from_json(const json& a, const std::string& where) {
  AifParams p;
  try {
    if (a.contains("dose")) p.dose = a.at("dose").get<double>();
    if (a.contains("a1")) p.a1 = a.at("a1").get<double>();
    if (a.contains("a2")) p.a2 = a.at("a2").get<double>();
    if (a.contains("m1")) p.m1 = a.at("m1").get<double>();
    if (a.contains("m2")) p.m2 = a.at("m2").get<double>();
  } catch (const json::exception& e) {
    throw StudyFormatError(where + ": aif: " + e.what());
  }
  if (!(p.dose > 0.0) || !(p.a1 > 0.0) || !(p.a2 > 0.0) || !(p.m1 > 0.0) ||
      !(p.m2 > 0.0))
    throw StudyFormatError(where + ": aif parameters must be positive");
  return p;
}

json aif_to_json(const AifParams& p) {
  return json{{"dose", p.dose}, {"a1", p.a1}, {"a2", p.a2},
              {"m1", p.m1},     {"m2", p.m2}};
}

std::string csv_name(int scan, int patient) {
  return "ctc_s" + std::to_string(scan + 1) + "_p" +
         std::to_string(patient + 1) + ".csv";
}

}  // namespace

void save_matrix_csv(const std::vector<std::vector<double>>& rows,
                     const std::filesystem::path& path) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += fmt17(row[c]);
    }
    out += '\n';
  }
  write_text(path, out);
}

std::vector<std::vector<double>> load_matrix_csv(
    const std::filesystem::path& path) {
  auto lines = read_lines(path);
  std::vector<std::vector<double>> rows;
  rows.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto toks = split_csv(lines[r]);
    std::vector<double> row;
    row.reserve(toks.size());
    for (std::size_t c = 0; c < toks.size(); ++c)
      row.push_back(parse_double(
          toks[c], path.string() + ":" + std::to_string(r + 1) + ":" +
                       std::to_string(c + 1)));
    rows.push_back(std::move(row));
  }
  return rows;
}

StudyData load_study(const std::filesystem::path& manifest) {
  const std::string where = manifest.string();
  json m = read_json(manifest);
  StudyData data;
  try {
    data.study_id = m.value("study_id", std::string("study"));
    int n_scans = m.at("n_scans").get<int>();
    int n_patients = m.at("n_patients").get<int>();
    if (n_scans != 2)
      throw StudyFormatError(where + ": n_scans must be 2 for this model");
    if (n_patients < 1)
      throw StudyFormatError(where + ": n_patients must be >= 1");
    double to_minutes = 1.0 / 60.0;
    if (m.contains("units")) {
      std::string tu = m.at("units").value("time", std::string("seconds"));
      if (tu == "minutes")
        to_minutes = 1.0;
      else if (tu != "seconds")
        throw StudyFormatError(where + ": units.time must be seconds or minutes");
    }
    bool keep_pre = m.value("include_preinjection", true);
    data.aif = m.contains("aif") ? aif_from_json(m.at("aif"), where)
                                 : AifParams{};

    auto& layout = data.layout;
    layout.n_scans = n_scans;
    layout.n_patients = n_patients;
    layout.n_voxels.assign(2, std::vector<int>(std::size_t(n_patients), 0));
    layout.grids.assign(2, std::vector<TimeGrid>(std::size_t(n_patients)));
    std::vector<std::vector<std::vector<double>>> blocks(
        std::size_t(2) * std::size_t(n_patients));

    if (!m.contains("series") || !m.at("series").is_array())
      throw StudyFormatError(where + ": missing series array");
    std::vector<bool> seen(std::size_t(2) * std::size_t(n_patients), false);
    for (const auto& entry : m.at("series")) {
      int scan = entry.at("scan").get<int>();
      int patient = entry.at("patient").get<int>();
      std::string ctx = where + ": series (scan " + std::to_string(scan) +
                        ", patient " + std::to_string(patient) + ")";
      if (scan < 1 || scan > 2 || patient < 1 || patient > n_patients)
        throw StudyFormatError(ctx + ": index out of range");
      auto slot = std::size_t(scan - 1) * std::size_t(n_patients) +
                  std::size_t(patient - 1);
      if (seen[slot]) throw StudyFormatError(ctx + ": duplicate entry");
      seen[slot] = true;
      auto times_json = entry.at("times");
      if (!times_json.is_array() || times_json.size() < 2)
        throw StudyFormatError(ctx + ": times must hold at least 2 values");
      std::vector<double> times;
      for (const auto& t : times_json)
        times.push_back(t.get<double>() * to_minutes);
      auto file = manifest.parent_path() / entry.at("data").get<std::string>();
      auto rows = load_matrix_csv(file);
      if (rows.empty()) throw StudyFormatError(ctx + ": no voxel rows in " +
                                               file.string());
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].size() != times.size())
          throw StudyFormatError(
              ctx + ": row " + std::to_string(r + 1) + " in " + file.string() +
              " has " + std::to_string(rows[r].size()) + " columns, expected " +
              std::to_string(times.size()));
      if (!keep_pre) {
        std::size_t n_pre = 0;
        while (n_pre < times.size() && times[n_pre] < 0.0) ++n_pre;
        times.erase(times.begin(), times.begin() + std::ptrdiff_t(n_pre));
        if (times.size() < 2)
          throw StudyFormatError(ctx + ": fewer than 2 frames after dropping "
                                       "pre-injection columns");
        for (auto& r : rows)
          r.erase(r.begin(), r.begin() + std::ptrdiff_t(n_pre));
      }
      layout.grids[std::size_t(scan - 1)][std::size_t(patient - 1)].times =
          std::move(times);
      layout.n_voxels[std::size_t(scan - 1)][std::size_t(patient - 1)] =
          int(rows.size());
      blocks[slot] = std::move(rows);
    }
    for (std::size_t slot = 0; slot < seen.size(); ++slot)
      if (!seen[slot])
        throw StudyFormatError(
            where + ": missing series entry for (scan " +
            std::to_string(slot / std::size_t(n_patients) + 1) + ", patient " +
            std::to_string(slot % std::size_t(n_patients) + 1) + ")");
    try {
      layout.finalize();
    } catch (const std::exception& e) {
      throw StudyFormatError(where + ": " + e.what());
    }
    data.series.resize(layout.total_voxels());
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < n_patients; ++j) {
        auto slot = std::size_t(i) * std::size_t(n_patients) + std::size_t(j);
        for (int k = 0; k < layout.nvox(i, j); ++k)
          data.series[layout.voxel_index(i, j, k)] =
              std::move(blocks[slot][std::size_t(k)]);
      }
  } catch (const json::exception& e) {
    throw StudyFormatError(where + ": " + e.what());
  }
  return data;
}

void save_study(const StudyData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& layout = data.layout;
  json m;
  m["study_id"] = data.study_id;
  m["units"] = {{"time", "seconds"}, {"concentration", "mmol/l"}};
  m["include_preinjection"] = true;
  m["aif"] = aif_to_json(data.aif);
  m["n_scans"] = layout.n_scans;
  m["n_patients"] = layout.n_patients;
  m["series"] = json::array();
  for (int i = 0; i < layout.n_scans; ++i) {
    for (int j = 0; j < layout.n_patients; ++j) {
      json entry;
      entry["scan"] = i + 1;
      entry["patient"] = j + 1;
      json times = json::array();
      for (double t : layout.grids[std::size_t(i)][std::size_t(j)].times)
        times.push_back(t * 60.0);
      entry["times"] = std::move(times);
      entry["data"] = csv_name(i, j);
      m["series"].push_back(std::move(entry));
      std::vector<std::vector<double>> rows;
      rows.reserve(std::size_t(layout.nvox(i, j)));
      for (int k = 0; k < layout.nvox(i, j); ++k)
        rows.push_back(data.series[layout.voxel_index(i, j, k)]);
      save_matrix_csv(rows, dir / csv_name(i, j));
    }
  }
  write_text(dir / "study.json", m.dump(2) + "\n");
}

SimSpec load_sim_spec(const std::filesystem::path& path) {
  const std::string where = path.string();
  json m = read_json(path);
  SimSpec spec;
  try {
    spec.study_id = m.value("study_id", spec.study_id);
    spec.n_patients = m.at("n_patients").get<int>();
    spec.n_voxels = m.at("n_voxels").get<int>();
    spec.n_time = m.at("n_time").get<int>();
    spec.dt_seconds = m.value("dt_seconds", spec.dt_seconds);
    spec.n_preinjection = m.value("n_preinjection", spec.n_preinjection);
    if (m.contains("alpha")) {
      spec.alpha[0] = m.at("alpha").at(0).get<double>();
      spec.alpha[1] = m.at("alpha").at(1).get<double>();
    }
    if (m.contains("beta")) {
      spec.beta[0] = m.at("beta").at(0).get<double>();
      spec.beta[1] = m.at("beta").at(1).get<double>();
    }
    spec.tau2_gamma = m.value("tau2_gamma", spec.tau2_gamma);
    spec.tau2_delta = m.value("tau2_delta", spec.tau2_delta);
    spec.tau2_eps = m.value("tau2_eps", spec.tau2_eps);
    spec.sigma2 = m.value("sigma2", spec.sigma2);
    if (m.contains("vp")) {
      const auto& v = m.at("vp");
      std::string dist = v.value("dist", std::string("beta"));
      if (dist == "beta") {
        spec.vp_beta = true;
        spec.vp_a = v.value("a", spec.vp_a);
        spec.vp_b = v.value("b", spec.vp_b);
      } else if (dist == "fixed") {
        spec.vp_beta = false;
        spec.vp_value = v.at("value").get<double>();
      } else {
        throw StudyFormatError(where + ": vp.dist must be beta or fixed");
      }
    }
    if (m.contains("aif")) spec.aif = aif_from_json(m.at("aif"), where);
  } catch (const json::exception& e) {
    throw StudyFormatError(where + ": " + e.what());
  }
  return spec;
}

SimResult simulate_study(const SimSpec& spec, std::uint64_t seed) {
  if (spec.n_patients < 1 || spec.n_voxels < 1 || spec.n_time < 2)
    throw std::invalid_argument("simulation spec needs J >= 1, voxels >= 1, T >= 2");
  if (!(spec.dt_seconds > 0.0))
    throw std::invalid_argument("dt_seconds must be positive");
  if (spec.n_preinjection < 0 || spec.n_preinjection >= spec.n_time)
    throw std::invalid_argument("n_preinjection must lie in [0, n_time)");
  if (spec.tau2_gamma < 0.0 || spec.tau2_delta < 0.0 || spec.tau2_eps < 0.0 ||
      spec.sigma2 < 0.0)
    throw std::invalid_argument("variances must be non-negative");
  if (!spec.vp_beta && !(spec.vp_value >= 0.0 && spec.vp_value < 1.0))
    throw std::invalid_argument("fixed vp must lie in [0,1)");

  SimResult result;
  auto& layout = result.study.layout;
  layout.n_scans = 2;
  layout.n_patients = spec.n_patients;
  TimeGrid grid;
  for (int f = 0; f < spec.n_time; ++f)
    grid.times.push_back(double(f - spec.n_preinjection) * spec.dt_seconds /
                         60.0);
  layout.n_voxels.assign(2, std::vector<int>(std::size_t(spec.n_patients),
                                             spec.n_voxels));
  layout.grids.assign(2, std::vector<TimeGrid>(std::size_t(spec.n_patients),
                                               grid));
  layout.finalize();
  result.study.aif = spec.aif;
  result.study.study_id = spec.study_id;

  Rng rng(seed);
  ModelState st = make_state(layout);
  st.alpha = spec.alpha;
  st.beta = spec.beta;
  auto J = std::size_t(spec.n_patients);
  double sd_gamma = std::sqrt(spec.tau2_gamma);
  double sd_delta = std::sqrt(spec.tau2_delta);
  double sd_eps = std::sqrt(spec.tau2_eps);
  double sd_noise = std::sqrt(spec.sigma2);
  for (std::size_t jl = 0; jl < J * 2; ++jl) {
    st.gamma[jl] = sd_gamma * rng.normal();
    st.tau2_gamma[jl] = spec.tau2_gamma;
  }
  for (std::size_t jl = 0; jl < J * 2; ++jl) {
    st.delta[jl] = sd_delta * rng.normal();
    st.tau2_delta[jl] = spec.tau2_delta;
  }
  for (auto& v : st.tau2_eps) v = spec.tau2_eps;
  for (auto& v : st.sigma2) v = spec.sigma2;

  CurvePlan plan = make_curve_plan(grid, spec.aif);
  result.truth.noise_free.resize(layout.total_voxels());
  result.study.series.resize(layout.total_voxels());
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < spec.n_patients; ++j) {
      auto mean = psi_mean(st, i, j);
      for (int k = 0; k < spec.n_voxels; ++k) {
        auto v = layout.voxel_index(i, j, k);
        st.psi[v * 2] = mean[0] + sd_eps * rng.normal();
        st.psi[v * 2 + 1] = mean[1] + sd_eps * rng.normal();
        st.vp[v] = spec.vp_beta ? rng.beta(spec.vp_a, spec.vp_b)
                                : spec.vp_value;
        auto& clean = result.truth.noise_free[v];
        clean.resize(plan.size());
        eval_ctc(plan, kinetic_from_psi(st.psi[v * 2], st.psi[v * 2 + 1],
                                        st.vp[v]),
                 clean.data());
        auto& noisy = result.study.series[v];
        noisy = clean;
        if (spec.sigma2 > 0.0)
          for (auto& val : noisy) val += sd_noise * rng.normal();
      }
    }
  }
  result.truth.state = std::move(st);
  return result;
}

namespace {

json layout_to_json(const StudyLayout& layout) {
  json j;
  j["n_scans"] = layout.n_scans;
  j["n_patients"] = layout.n_patients;
  j["n_voxels"] = layout.n_voxels;
  json grids = json::array();
  for (int i = 0; i < layout.n_scans; ++i) {
    json per_scan = json::array();
    for (int p = 0; p < layout.n_patients; ++p) {
      json times = json::array();
      for (double t : layout.grids[std::size_t(i)][std::size_t(p)].times)
        times.push_back(t * 60.0);
      per_scan.push_back(std::move(times));
    }
    grids.push_back(std::move(per_scan));
  }
  j["times_seconds"] = std::move(grids);
  return j;
}

StudyLayout layout_from_json(const json& j, const std::string& where) {
  StudyLayout layout;
  layout.n_scans = j.at("n_scans").get<int>();
  layout.n_patients = j.at("n_patients").get<int>();
  layout.n_voxels = j.at("n_voxels").get<std::vector<std::vector<int>>>();
  const auto& grids = j.at("times_seconds");
  layout.grids.resize(grids.size());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    for (const auto& times : grids[i]) {
      TimeGrid g;
      for (const auto& t : times) g.times.push_back(t.get<double>() / 60.0);
      layout.grids[i].push_back(std::move(g));
    }
  }
  try {
    layout.finalize();
  } catch (const std::exception& e) {
    throw StudyFormatError(where + ": " + e.what());
  }
  return layout;
}

// indexed parameter names like gamma[3,1]; the header quotes them since
// the indices contain commas
std::vector<std::string> chain_column_names(const StudyLayout& layout) {
  std::vector<std::string> names;
  auto tag1 = [](const char* base, int a) {
    return std::string(base) + "[" + std::to_string(a) + "]";
  };
  auto tag2 = [](const char* base, int a, int b) {
    return std::string(base) + "[" + std::to_string(a) + "," +
           std::to_string(b) + "]";
  };
  auto tag3 = [](const char* base, int a, int b, int c) {
    return std::string(base) + "[" + std::to_string(a) + "," +
           std::to_string(b) + "," + std::to_string(c) + "]";
  };
  int J = layout.n_patients;
  names.push_back(tag1("alpha", 1));
  names.push_back(tag1("alpha", 2));
  names.push_back(tag1("beta", 1));
  names.push_back(tag1("beta", 2));
  for (int j = 1; j <= J; ++j)
    for (int l = 1; l <= 2; ++l) names.push_back(tag2("gamma", j, l));
  for (int j = 1; j <= J; ++j)
    for (int l = 1; l <= 2; ++l) names.push_back(tag2("delta", j, l));
  for (int j = 1; j <= J; ++j)
    for (int l = 1; l <= 2; ++l) names.push_back(tag2("tau2_gamma", j, l));
  for (int j = 1; j <= J; ++j)
    for (int l = 1; l <= 2; ++l) names.push_back(tag2("tau2_delta", j, l));
  for (int i = 1; i <= layout.n_scans; ++i)
    for (int j = 1; j <= J; ++j)
      for (int l = 1; l <= 2; ++l) names.push_back(tag3("tau2_eps", i, j, l));
  for (int i = 1; i <= layout.n_scans; ++i)
    for (int j = 1; j <= J; ++j) names.push_back(tag2("sigma2", i, j));
  for (int i = 1; i <= layout.n_scans; ++i)
    for (int j = 1; j <= J; ++j)
      for (int k = 1; k <= layout.nvox(i - 1, j - 1); ++k) {
        names.push_back(std::string("psi[") + std::to_string(i) + "," +
                        std::to_string(j) + "," + std::to_string(k) + ",1]");
        names.push_back(std::string("psi[") + std::to_string(i) + "," +
                        std::to_string(j) + "," + std::to_string(k) + ",2]");
        names.push_back(tag3("vp", i, j, k));
      }
  return names;
}

std::string chain_header(const std::vector<std::string>& names) {
  std::string header;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c) header += ',';
    header += '"';
    header += names[c];
    header += '"';
  }
  return header;
}

void state_to_row(const StudyLayout& layout, const ModelState& s,
                  std::vector<double>& row) {
  row.clear();
  row.push_back(s.alpha[0]);
  row.push_back(s.alpha[1]);
  row.push_back(s.beta[0]);
  row.push_back(s.beta[1]);
  for (double v : s.gamma) row.push_back(v);
  for (double v : s.delta) row.push_back(v);
  for (double v : s.tau2_gamma) row.push_back(v);
  for (double v : s.tau2_delta) row.push_back(v);
  for (double v : s.tau2_eps) row.push_back(v);
  for (double v : s.sigma2) row.push_back(v);
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j)
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        auto v = layout.voxel_index(i, j, k);
        row.push_back(s.psi[v * 2]);
        row.push_back(s.psi[v * 2 + 1]);
        row.push_back(s.vp[v]);
      }
}

ModelState state_from_row(const StudyLayout& layout,
                          const std::vector<double>& row) {
  ModelState s = make_state(layout);
  std::size_t c = 0;
  s.alpha[0] = row[c++];
  s.alpha[1] = row[c++];
  s.beta[0] = row[c++];
  s.beta[1] = row[c++];
  for (auto& v : s.gamma) v = row[c++];
  for (auto& v : s.delta) v = row[c++];
  for (auto& v : s.tau2_gamma) v = row[c++];
  for (auto& v : s.tau2_delta) v = row[c++];
  for (auto& v : s.tau2_eps) v = row[c++];
  for (auto& v : s.sigma2) v = row[c++];
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j)
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        auto v = layout.voxel_index(i, j, k);
        s.psi[v * 2] = row[c++];
        s.psi[v * 2 + 1] = row[c++];
        s.vp[v] = row[c++];
      }
  return s;
}

}  // namespace

void save_chain(const ChainSamples& chain, const std::filesystem::path& csv) {
  auto names = chain_column_names(chain.layout);
  std::string out = chain_header(names);
  out += '\n';
  std::vector<double> row;
  for (const auto& draw : chain.draws) {
    state_to_row(chain.layout, draw, row);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += fmt17(row[c]);
    }
    out += '\n';
  }
  write_text(csv, out);

  json side;
  side["format"] = "dcehier-chain-1";
  side["study_id"] = chain.study_id;
  side["config"] = {
      {"burn_in", chain.config.burn_in},
      {"iterations", chain.config.iterations},
      {"thin", chain.config.thin},
      {"seed", chain.config.seed},
      {"adapt_interval", chain.config.adapt_interval},
      {"target_accept",
       json::array({chain.config.target_accept_lo,
                    chain.config.target_accept_hi})},
      {"psi_proposal_sd", chain.config.psi_proposal_sd},
      {"vp_proposal_sd", chain.config.vp_proposal_sd}};
  side["acceptance"] = {{"psi_rate", chain.acceptance.psi_rate},
                        {"vp_rate", chain.acceptance.vp_rate},
                        {"psi_sd", chain.acceptance.psi_sd},
                        {"vp_sd", chain.acceptance.vp_sd},
                        {"psi_proposals", chain.acceptance.psi_proposals},
                        {"vp_proposals", chain.acceptance.vp_proposals}};
  side["layout"] = layout_to_json(chain.layout);
  side["n_draws"] = chain.draws.size();
  write_text(csv.string() + ".json", side.dump(2) + "\n");
}

ChainSamples load_chain(const std::filesystem::path& csv) {
  const std::string side_path = csv.string() + ".json";
  json side = read_json(side_path);
  ChainSamples chain;
  try {
    chain.study_id = side.value("study_id", std::string());
    const auto& cfg = side.at("config");
    chain.config.burn_in = cfg.at("burn_in").get<std::int64_t>();
    chain.config.iterations = cfg.at("iterations").get<std::int64_t>();
    chain.config.thin = cfg.at("thin").get<std::int64_t>();
    chain.config.seed = cfg.at("seed").get<std::uint64_t>();
    chain.config.adapt_interval = cfg.at("adapt_interval").get<std::int64_t>();
    chain.config.target_accept_lo = cfg.at("target_accept").at(0).get<double>();
    chain.config.target_accept_hi = cfg.at("target_accept").at(1).get<double>();
    chain.config.psi_proposal_sd = cfg.at("psi_proposal_sd").get<double>();
    chain.config.vp_proposal_sd = cfg.at("vp_proposal_sd").get<double>();
    const auto& acc = side.at("acceptance");
    chain.acceptance.psi_rate = acc.at("psi_rate").get<double>();
    chain.acceptance.vp_rate = acc.at("vp_rate").get<double>();
    chain.acceptance.psi_sd = acc.at("psi_sd").get<double>();
    chain.acceptance.vp_sd = acc.at("vp_sd").get<double>();
    chain.acceptance.psi_proposals =
        acc.at("psi_proposals").get<std::int64_t>();
    chain.acceptance.vp_proposals = acc.at("vp_proposals").get<std::int64_t>();
    chain.layout = layout_from_json(side.at("layout"), side_path);
  } catch (const json::exception& e) {
    throw StudyFormatError(side_path + ": " + e.what());
  }

  auto lines = read_lines(csv);
  if (lines.empty()) throw StudyFormatError(csv.string() + ": empty chain file");
  auto names = chain_column_names(chain.layout);
  if (lines[0] != chain_header(names))
    throw StudyFormatError(csv.string() +
                           ": header does not match the layout");
  std::vector<double> row(names.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto toks = split_csv(lines[r]);
    if (toks.size() != names.size())
      throw StudyFormatError(csv.string() + ": row " + std::to_string(r) +
                             " has " + std::to_string(toks.size()) +
                             " fields, expected " +
                             std::to_string(names.size()));
    for (std::size_t c = 0; c < toks.size(); ++c)
      row[c] = parse_double(toks[c], csv.string() + ":" + std::to_string(r + 1));
    chain.draws.push_back(state_from_row(chain.layout, row));
  }
  if (side.contains("n_draws") &&
      side.at("n_draws").get<std::size_t>() != chain.draws.size())
    throw StudyFormatError(csv.string() + ": draw count differs from sidecar");
  return chain;
}

void save_ground_truth(const GroundTruth& truth, const StudyLayout& layout,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json t;
  t["layout"] = layout_to_json(layout);
  t["alpha"] = truth.state.alpha;
  t["beta"] = truth.state.beta;
  t["gamma"] = truth.state.gamma;
  t["delta"] = truth.state.delta;
  t["tau2_gamma"] = truth.state.tau2_gamma;
  t["tau2_delta"] = truth.state.tau2_delta;
  t["tau2_eps"] = truth.state.tau2_eps;
  t["sigma2"] = truth.state.sigma2;
  t["psi"] = truth.state.psi;
  t["vp"] = truth.state.vp;
  write_text(dir / "truth.json", t.dump(2) + "\n");
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j) {
      std::vector<std::vector<double>> rows;
      for (int k = 0; k < layout.nvox(i, j); ++k)
        rows.push_back(truth.noise_free[layout.voxel_index(i, j, k)]);
      save_matrix_csv(rows, dir / ("truth_" + csv_name(i, j)));
    }
}

GroundTruth load_ground_truth(const std::filesystem::path& dir,
                              const StudyLayout& layout) {
  auto path = dir / "truth.json";
  json t = read_json(path);
  GroundTruth truth;
  try {
    StudyLayout stored = layout_from_json(t.at("layout"), path.string());
    if (stored.n_voxels != layout.n_voxels)
      throw StudyFormatError(path.string() +
                             ": stored layout does not match the study");
    truth.state = make_state(layout);
    truth.state.alpha = t.at("alpha").get<std::array<double, 2>>();
    truth.state.beta = t.at("beta").get<std::array<double, 2>>();
    auto fill = [&](const char* key, std::vector<double>& dst) {
      auto src = t.at(key).get<std::vector<double>>();
      if (src.size() != dst.size())
        throw StudyFormatError(path.string() + ": field " + key +
                               " has wrong length");
      dst = std::move(src);
    };
    fill("gamma", truth.state.gamma);
    fill("delta", truth.state.delta);
    fill("tau2_gamma", truth.state.tau2_gamma);
    fill("tau2_delta", truth.state.tau2_delta);
    fill("tau2_eps", truth.state.tau2_eps);
    fill("sigma2", truth.state.sigma2);
    fill("psi", truth.state.psi);
    fill("vp", truth.state.vp);
  } catch (const json::exception& e) {
    throw StudyFormatError(path.string() + ": " + e.what());
  }
  truth.noise_free.resize(layout.total_voxels());
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j) {
      auto rows = load_matrix_csv(dir / ("truth_" + csv_name(i, j)));
      if (rows.size() != std::size_t(layout.nvox(i, j)))
        throw StudyFormatError("truth matrix row count mismatch for scan " +
                               std::to_string(i + 1) + ", patient " +
                               std::to_string(j + 1));
      for (int k = 0; k < layout.nvox(i, j); ++k)
        truth.noise_free[layout.voxel_index(i, j, k)] =
            std::move(rows[std::size_t(k)]);
    }
  return truth;
}

void load_pre_post_csv(const std::filesystem::path& path,
                       std::vector<double>& pre, std::vector<double>& post) {
  auto lines = read_lines(path);
  if (lines.size() < 2)
    throw StudyFormatError(path.string() + ": expected a pre,post header and "
                                           "at least one data row");
  pre.clear();
  post.clear();
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto toks = split_csv(lines[r]);
    if (toks.size() != 2)
      throw StudyFormatError(path.string() + ": row " + std::to_string(r + 1) +
                             " must hold exactly two values");
    auto ctx = path.string() + ":" + std::to_string(r + 1);
    pre.push_back(parse_double(toks[0], ctx));
    post.push_back(parse_double(toks[1], ctx));
  }
}

void save_fits_csv(const std::vector<NlsFit>& fits, const StudyLayout& layout,
                   const std::filesystem::path& path) {
  std::string out = "scan,patient,voxel,ktrans,kep,vp,converged,rss\n";
  for (int i = 0; i < layout.n_scans; ++i)
    for (int j = 0; j < layout.n_patients; ++j)
      for (int k = 0; k < layout.nvox(i, j); ++k) {
        const auto& f = fits[layout.voxel_index(i, j, k)];
        out += std::to_string(i + 1) + "," + std::to_string(j + 1) + "," +
               std::to_string(k + 1) + "," + fmt17(f.params.ktrans) + "," +
               fmt17(f.params.kep) + "," + fmt17(f.params.vp) + "," +
               (f.converged ? "1" : "0") + "," + fmt17(f.rss) + "\n";
      }
  write_text(path, out);
}

void save_medians_csv(const StudyData& data, const std::vector<NlsFit>& fits,
                      const std::filesystem::path& path) {
  const auto& layout = data.layout;
  std::string out = "patient,pre,post\n";
  for (int j = 0; j < layout.n_patients; ++j) {
    out += std::to_string(j + 1);
    for (int i = 0; i < layout.n_scans; ++i) {
      std::span<const NlsFit> block(fits.data() + layout.block(i, j),
                                    std::size_t(layout.nvox(i, j)));
      double med = std::numeric_limits<double>::quiet_NaN();
      try {
        med = roi_median_ktrans(block);
      } catch (const std::invalid_argument&) {
        // no converged fits in this block; recorded as nan
      }
      out += "," + fmt17(med);
    }
    out += "\n";
  }
  write_text(path, out);
}

void save_density_csv(const DensityCurve& curve,
                      const std::filesystem::path& path) {
  std::string out = "grid,density\n";
  for (std::size_t g = 0; g < curve.grid.size(); ++g)
    out += fmt17(curve.grid[g]) + "," + fmt17(curve.density[g]) + "\n";
  write_text(path, out);
}

}  // namespace dcehier
