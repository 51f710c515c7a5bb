#include "hitl/control_api.hpp"

#include "hitl/tag_codec.hpp"

#include <httplib.h>

#include <charconv>
#include <thread>

namespace hitl {

using nlohmann::json;

namespace {

constexpr std::string_view kPrefix = "/api/v1";

ApiResponse error_response(int status, std::string_view code, const std::string &message) {
  return {status, json{{"error", json{{"code", code}, {"message", message}}}}};
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    auto next = path.find('/', pos);
    auto part = path.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    if (!part.empty())
      out.emplace_back(part);
    if (next == std::string_view::npos)
      break;
    pos = next + 1;
  }
  return out;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      int v = 0;
      auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec == std::errc{} && p == s.data() + i + 3) {
        out.push_back(static_cast<char>(v));
        i += 2;
        continue;
      }
    }
    out.push_back(s[i] == '+' ? ' ' : s[i]);
  }
  return out;
}

std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < q.size()) {
    auto amp = q.find('&', pos);
    auto item = q.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
    auto eq = item.find('=');
    if (!item.empty())
      out[url_decode(item.substr(0, eq))] =
          eq == std::string_view::npos ? std::string{} : url_decode(item.substr(eq + 1));
    if (amp == std::string_view::npos)
      break;
    pos = amp + 1;
  }
  return out;
}

std::optional<std::size_t> query_size(const std::map<std::string, std::string> &q,
                                      const std::string &name) {
  auto it = q.find(name);
  if (it == q.end())
    return std::nullopt;
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw Error(Errc::config_error, "query parameter '" + name + "' must be a non-negative integer");
  return v;
}

json quote_checks(const TaggedReport &report, const Bindings &inputs) {
  json out = json::array();
  for (const auto &q : report.quotations) {
    json check{{"quote", q}, {"verified", false}, {"input", nullptr}, {"segments", json::array()}};
    for (const auto &[name, text] : inputs) {
      auto result = verify_quote(q, text);
      if (result.verified) {
        json segs = json::array();
        for (const auto &s : result.segments)
          segs.push_back(json{{"offset", s.offset}, {"length", s.length}});
        check = json{{"quote", q}, {"verified", true}, {"input", name}, {"segments", segs}};
        break;
      }
    }
    out.push_back(std::move(check));
  }
  return out;
}

} // namespace

int http_status_for(Errc code) noexcept {
  switch (code) {
  case Errc::unknown_run: return 404;
  case Errc::not_awaiting: return 409;
  case Errc::contract_violation:
  case Errc::invalid_decision: return 422;
  case Errc::config_error: return 400;
  default: return 500;
  }
}

ControlApi::ControlApi(RunManager &runs) : runs_(runs) {}

json ControlApi::checkpoint_view(const std::string &run_id, const std::string &stage_id) {
  auto state = runs_.state(run_id);
  auto spec = runs_.spec(run_id);
  const Stage *stage = spec.find_stage(stage_id);
  if (!stage)
    throw Error(Errc::unknown_run, "run " + run_id + " has no stage " + stage_id);
  const auto &st = state.stages.at(stage_id);
  json slots = json::array();
  for (const auto &plan : plan_slots(spec, *stage, state)) {
    json slot{{"slot", plan.slot}, {"key", plan.key}, {"item", plan.item}, {"run", plan.rep}};
    if (const Artifact *a = state.artifact(stage_id, plan.slot)) {
      slot["artifact"] = artifact_to_json(*a);
      json checks = json::array();
      for (const auto &r : a->reports())
        checks.push_back(quote_checks(r, state.inputs));
      slot["quote_checks"] = checks;
    }
    if (auto f = st.failures.find(plan.slot); f != st.failures.end())
      slot["failure"] = json{{"code", to_string(f->second.code)}, {"message", f->second.message}};
    auto raw = state.responses.find({stage_id, plan.slot});
    if (raw != state.responses.end())
      slot["raw"] = raw->second;
    slots.push_back(std::move(slot));
  }
  return json{{"run_id", run_id},
              {"stage", stage_id},
              {"kind", to_string(stage->kind)},
              {"status", to_string(st.status)},
              {"contract", stage->contract},
              {"slots", slots},
              {"failed", st.failures.size()}};
}

ApiResponse ControlApi::handle(std::string_view method, std::string_view target,
                               std::string_view body) {
  auto qmark = target.find('?');
  auto path = target.substr(0, qmark);
  auto query = parse_query(qmark == std::string_view::npos ? std::string_view{}
                                                           : target.substr(qmark + 1));
  if (!path.starts_with(kPrefix))
    return error_response(404, "not-found", "no route for " + std::string(path));
  auto parts = split_path(path.substr(kPrefix.size()));
  for (auto &p : parts)
    p = url_decode(p);

  try {
    if (method == "GET" && parts.size() == 1 && parts[0] == "runs") {
      json runs = json::array();
      for (const auto &id : runs_.run_ids()) {
        try {
          auto s = runs_.state(id);
          runs.push_back(json{{"run_id", id}, {"spec_id", s.spec_id},
                              {"status", to_string(s.status)}, {"clock", s.clock},
                              {"parent_run_id", s.parent_run_id}});
        } catch (const Error &e) {
          runs.push_back(json{{"run_id", id}, {"status", "unreadable"},
                              {"error", json{{"code", e.code_name()}, {"message", e.what()}}}});
        }
      }
      return {200, json{{"runs", runs}}};
    }
    if (method == "GET" && parts.size() == 1 && parts[0] == "checkpoints") {
      json out = json::array();
      for (const auto &p : runs_.pending_all())
        out.push_back(checkpoint_view(p.run_id, p.stage));
      return {200, json{{"checkpoints", out}}};
    }
    if (parts.size() >= 2 && parts[0] == "runs") {
      const auto &run_id = parts[1];
      runs_.trail(run_id); // throws unknown-run
      if (method == "GET" && parts.size() == 2)
        return {200, run_state_json(runs_.state(run_id))};
      if (method == "GET" && parts.size() == 3 && parts[2] == "checkpoints") {
        json out = json::array();
        for (const auto &p : runs_.pending(run_id))
          out.push_back(checkpoint_view(p.run_id, p.stage));
        return {200, json{{"checkpoints", out}}};
      }
      if (method == "GET" && parts.size() == 3 && parts[2] == "audit") {
        auto trail = runs_.trail(run_id);
        auto offset = query_size(query, "offset").value_or(0);
        auto limit = query_size(query, "limit").value_or(100);
        json events = json::array();
        for (std::size_t i = offset; i < trail.size() && i < offset + limit; ++i)
          events.push_back(trail[i]);
        return {200, json{{"run_id", run_id}, {"offset", offset}, {"limit", limit},
                          {"total", trail.size()}, {"events", events}}};
      }
      if (method == "POST" && parts.size() == 3 && parts[2] == "decisions") {
        json doc;
        try {
          doc = json::parse(body);
        } catch (const json::exception &e) {
          return error_response(400, "bad-request", std::string("body is not JSON: ") + e.what());
        }
        Decision d;
        try {
          d = doc.get<Decision>();
        } catch (const json::exception &e) {
          return error_response(400, "bad-request", std::string("bad decision: ") + e.what());
        }
        auto s = runs_.decide(run_id, d);
        return {202, run_state_json(s)};
      }
    }
    return error_response(404, "not-found",
                          "no route for " + std::string(method) + " " + std::string(path));
  } catch (const Error &e) {
    return error_response(http_status_for(e.code()), e.code_name(), e.what());
  } catch (const std::exception &e) {
    return error_response(500, "internal", e.what());
  }
}

struct ApiServer::Impl {
  ControlApi &api;
  std::filesystem::path static_dir;
  httplib::Server server;
  std::jthread thread;

  Impl(ControlApi &a, std::filesystem::path dir) : api(a), static_dir(std::move(dir)) {}

  void install() {
    auto dispatch = [this](const httplib::Request &req, httplib::Response &res) {
      std::string target = req.path;
      if (!req.params.empty()) {
        std::string q;
        for (const auto &[k, v] : req.params)
          q += (q.empty() ? "" : "&") + k + "=" + v;
        target += "?" + q;
      }
      auto out = api.handle(req.method, target, req.body);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
    server.Get(R"(/api/v1/.*)", dispatch);
    server.Post(R"(/api/v1/.*)", dispatch);
    if (!static_dir.empty() && std::filesystem::is_directory(static_dir))
      server.set_mount_point("/", static_dir.string());
  }
};

ApiServer::ApiServer(ControlApi &api, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(api, std::move(static_dir))) {
  impl_->install();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string &host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                        : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0)
    throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::jthread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ApiServer::listen(const std::string &host, int port) {
  if (!impl_->server.listen(host, port))
    throw Error(Errc::io_error, "cannot listen on " + host + ":" + std::to_string(port));
}

void ApiServer::stop() {
  if (impl_->server.is_running())
    impl_->server.stop();
  if (impl_->thread.joinable())
    impl_->thread.join();
}

} // namespace hitl
