#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "restsec/cli.hpp"
#include "restsec/fixtures.hpp"
#include "restsec/oracles.hpp"
#include "restsec/payloads.hpp"
#include "restsec/report.hpp"
#include "restsec/schema.hpp"
#include "restsec/stack_traces.hpp"

namespace py = pybind11;
using namespace restsec;

namespace {

RunConfig config_from(const py::dict& kw) {
  RunConfig c;
  auto get = [&](const char* key) -> py::object {
    if (!kw.contains(key)) return py::none();
    return kw[key];
  };
  if (auto v = get("schema"); !v.is_none()) c.schema_source = v.cast<std::string>();
  if (auto v = get("schema_text"); !v.is_none()) c.schema_text = v.cast<std::string>();
  if (auto v = get("base_url"); !v.is_none()) c.base_url = v.cast<std::string>();
  if (auto v = get("auth"); !v.is_none()) c.auth_path = v.cast<std::string>();
  if (auto v = get("auth_text"); !v.is_none()) c.auth_text = v.cast<std::string>();
  if (auto v = get("budget_seconds"); !v.is_none()) c.budget_seconds = v.cast<double>();
  if (auto v = get("seed"); !v.is_none()) c.seed = v.cast<std::uint64_t>();
  if (auto v = get("oracles"); !v.is_none()) c.oracles = v.cast<std::map<int, bool>>();
  if (auto v = get("sqli_sleep_seconds"); !v.is_none()) c.sqli_sleep_seconds = v.cast<double>();
  if (auto v = get("sqli_baseline_max_ms"); !v.is_none()) c.sqli_baseline_max_ms = v.cast<double>();
  if (auto v = get("security_budget_seconds"); !v.is_none()) {
    c.security_budget_seconds = v.cast<double>();
  }
  if (auto v = get("security_budget_percent"); !v.is_none()) {
    c.security_budget_percent = v.cast<double>();
  }
  if (auto v = get("out_dir"); !v.is_none()) c.out_dir = v.cast<std::string>();
  if (auto v = get("emit"); !v.is_none()) {
    c.emit.clear();
    for (const auto& name : v.cast<std::vector<std::string>>()) {
      auto f = parse_emit_format(name);
      if (!f) throw py::value_error("unknown emit format '" + name + "'");
      c.emit.push_back(*f);
    }
  }
  if (auto v = get("corpus_in"); !v.is_none()) c.corpus_in = v.cast<std::string>();
  if (auto v = get("corpus_out"); !v.is_none()) c.corpus_out = v.cast<std::string>();
  if (auto v = get("timeout_ms"); !v.is_none()) c.timeout_ms = v.cast<double>();
  if (auto v = get("plateau_window"); !v.is_none()) c.plateau_window = v.cast<std::size_t>();
  if (auto v = get("tag_server_errors"); !v.is_none()) c.tag_server_errors = v.cast<bool>();
  return c;
}

py::dict result_dict(const RunResult& r) {
  py::dict d;
  d["exit_code"] = r.exit_code;
  d["error"] = r.error;
  d["report_json"] = r.exit_code == kExitError ? std::string() : dump_report(r.report);
  d["report_path"] = r.report_path;
  d["suite_paths"] = r.suite_paths;
  d["pool_size"] = r.pool_size;
  d["tests_executed"] = r.fuzz.tests_executed;
  d["warnings"] = r.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_restsec, m) {
  m.doc() = "Black-box REST API security testing";
  m.attr("__version__") = RESTSEC_VERSION;

  m.def("fault_label", [](int code) { return std::string(fault_label(code)); }, py::arg("code"));
  m.def("security_oracles", [] {
    return std::vector<int>(std::begin(kSecurityOracles), std::end(kSecurityOracles));
  });

  m.def("fixture_names", [] {
    std::vector<std::string> out;
    for (const auto& f : embedded_fixtures()) out.emplace_back(f.name);
    return out;
  });
  m.def("seeded_fault_code", [](const std::string& name) { return seeded_fault_code(name); },
        py::arg("name"));
  m.def(
      "fixture_documents",
      [](const std::string& name) {
        const auto& f = find_fixture(name);
        return py::make_tuple(std::string(f.schema), std::string(f.auth));
      },
      py::arg("name"));

  m.def(
      "schema_endpoints",
      [](const std::string& document) {
        auto schema = load_schema(document);
        std::vector<std::string> out;
        for (const auto& ep : schema.endpoints()) out.push_back(ep.id.str());
        return out;
      },
      py::arg("document"));
  m.def("parse_allow_header", [](const std::string& value) {
    std::vector<std::string> out;
    for (auto v : parse_allow_header(value)) out.emplace_back(to_string(v));
    return out;
  });
  m.def("render_sqli_payload", &render_sqli_payload, py::arg("template"), py::arg("sleep_seconds"));
  m.def(
      "find_stack_trace",
      [](const std::string& body) -> py::object {
        static const auto detector = StackTraceDetector::shipped();
        auto match = detector.find(body);
        if (!match) return py::none();
        py::dict d;
        d["pattern"] = match->pattern;
        d["language"] = match->language;
        d["line"] = match->line;
        return d;
      },
      py::arg("body"));

  py::class_<FixtureServer>(m, "Fixture")
      .def(py::init([](const std::string& name, bool sqli_sleep, double sqli_sleep_seconds) {
             FixtureOptions o;
             o.sqli_sleep_enabled = sqli_sleep;
             o.sqli_sleep_seconds = sqli_sleep_seconds;
             return std::make_unique<FixtureServer>(name, o);
           }),
           py::arg("name"), py::arg("sqli_sleep") = true, py::arg("sqli_sleep_seconds") = 5.0)
      .def("start", &FixtureServer::start, py::arg("port") = 0)
      .def("stop", &FixtureServer::stop, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("running", &FixtureServer::running)
      .def_property_readonly("port", &FixtureServer::port)
      .def_property_readonly("base_url", &FixtureServer::base_url)
      .def_property_readonly("name", &FixtureServer::name)
      .def_property("sqli_sleep", &FixtureServer::sqli_sleep, &FixtureServer::set_sqli_sleep)
      .def("__enter__",
           [](FixtureServer& s) -> FixtureServer& {
             s.start();
             return s;
           },
           py::return_value_policy::reference)
      .def("__exit__", [](FixtureServer& s, py::args) { s.stop(); });

  m.def(
      "_fuzz",
      [](const py::dict& kw) {
        RunConfig c = config_from(kw);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_fuzz(c);
        }
        return result_dict(r);
      },
      py::arg("config"));

  m.def(
      "replay",
      [](const std::string& plan, const std::string& base_url, double timeout_ms) {
        ReplayResult r;
        {
          py::gil_scoped_release release;
          r = run_replay(plan, base_url, timeout_ms);
        }
        std::vector<py::tuple> outcomes;
        for (const auto& o : r.outcomes)
          outcomes.push_back(py::make_tuple(o.name, o.passed, o.failure));
        return py::make_tuple(r.exit_code, outcomes);
      },
      py::arg("plan"), py::arg("base_url") = "", py::arg("timeout_ms") = 10000.0);

  m.def(
      "main",
      [](std::vector<std::string> argv) {
        argv.insert(argv.begin(), "restsec");
        std::vector<char*> ptrs;
        for (auto& a : argv) ptrs.push_back(a.data());
        py::gil_scoped_release release;
        return cli_main(static_cast<int>(ptrs.size()), ptrs.data());
      },
      py::arg("argv"));
}
