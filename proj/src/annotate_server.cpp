#include <httplib.h>

#include <thread>

#include "proxyrank/annotate.hpp"

namespace proxyrank::annotate {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownItem:
      return 404;
    case ErrorCode::UnknownAnnotator:
      return 403;
    case ErrorCode::SessionClosed:
    case ErrorCode::SessionOpen:
    case ErrorCode::StaleVersion:
    case ErrorCode::IncompleteCalibration:
      return 409;
    case ErrorCode::Io:
      return 500;
    default:
      return 400;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), {{"error", to_string(code)}, {"message", message}});
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const json::exception& e) {
    send_error(res, ErrorCode::InvalidField, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw Error(ErrorCode::MalformedLine, "request body must be a JSON object");
  return body;
}

SessionRequest session_request(const json& body) {
  SessionRequest r;
  auto task = parse_task(body.at("task").get<std::string>());
  if (!task) throw Error(ErrorCode::InvalidField, "unknown task");
  r.task = *task;
  auto phase = parse_phase(body.value("phase", "calibration"));
  if (!phase) throw Error(ErrorCode::InvalidField, "unknown phase");
  r.phase = *phase;
  r.seed = body.value("seed", std::uint64_t{0});
  r.annotators = body.value("annotators", std::vector<std::string>{});
  for (const auto& it : body.at("items")) {
    ItemSpec spec;
    spec.item_id = it.at("item_id").get<std::string>();
    spec.fields = it.value("fields", std::map<std::string, std::string>{});
    for (const auto& c : it.at("candidates")) {
      spec.candidates.push_back({c.at("system_id").get<std::string>(), c.at("text").get<std::string>()});
    }
    r.items.push_back(std::move(spec));
  }
  return r;
}

json alpha_json(const stats::AlphaResult& a) {
  return {{"alpha", a.alpha},
          {"metric", stats::to_token(a.metric)},
          {"n_units", a.n_units},
          {"n_raters", a.n_raters},
          {"n_pairable_values", a.n_pairable_values}};
}

}  // namespace

struct AnnotateServer::Impl {
  AnnotationStore& store;
  httplib::Server server;
  std::thread thread;

  explicit Impl(AnnotationStore& s) : store(s) { routes(); }

  void routes() {
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto s = store.create_session(session_request(parse_body(req)));
        send_json(res, 201, store.session_summary(s.session_id));
      });
    });
    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, store.session_summary(req.matches[1])); });
    });
    server.Get(R"(/sessions/([^/]+)/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_param("annotator")) throw Error(ErrorCode::MissingField, "query parameter 'annotator' is required");
        send_json(res, 200, store.item_view(req.matches[1], req.matches[2], req.get_param_value("annotator")));
      });
    });
    server.Post(R"(/sessions/([^/]+)/items/([^/]+)/grades)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const auto body = parse_body(req);
                    GradeSubmission sub;
                    sub.session_id = req.matches[1];
                    sub.item_id = req.matches[2];
                    sub.annotator_id = body.at("annotator_id").get<std::string>();
                    sub.version = body.at("version").get<int>();
                    sub.grades = body.at("grades").get<std::map<std::string, int>>();
                    send_json(res, 200, {{"version", store.submit_grades(sub)}});
                  });
                });
    server.Post(R"(/sessions/([^/]+)/close)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        store.close(req.matches[1]);
        send_json(res, 200, store.session_summary(req.matches[1]));
      });
    });
    server.Get(R"(/sessions/([^/]+)/ita)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, alpha_json(store.compute_ita(req.matches[1]))); });
    });
    server.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json sheets = json::array();
        for (const auto& s : store.export_sheets(req.matches[1])) sheets.push_back(stats::to_json(s));
        send_json(res, 200, {{"session_id", std::string(req.matches[1])}, {"sheets", sheets}});
      });
    });
  }
};

AnnotateServer::AnnotateServer(AnnotationStore& store) : impl_(std::make_unique<Impl>(store)) {}

AnnotateServer::~AnnotateServer() { stop(); }

int AnnotateServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void AnnotateServer::listen() { impl_->server.listen_after_bind(); }

int AnnotateServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void AnnotateServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace proxyrank::annotate
