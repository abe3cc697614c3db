#include "memessl/review_server.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "httplib.h"
#include "json.hpp"
#include "memessl/image.hpp"
#include "memessl/util.hpp"

namespace memessl {

namespace {

using nlohmann::ordered_json;

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, status, ordered_json{{"error", msg}});
}

std::optional<std::int64_t> parse_i64(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

ordered_json entry_json(const CandidateEntry& e) {
  const auto& c = e.candidate;
  ordered_json j;
  j["id"] = c.id;
  j["text"] = c.text;
  j["img"] = c.img;
  j["image_url"] = "/api/images/" + std::to_string(c.id);
  j["confidence"] = c.confidence;
  j["assigned_label"] = c.assigned_label;
  j["stage"] = c.stage;
  j["status"] = std::string(to_string(e.status));
  if (e.decision) {
    j["decision"] = ordered_json::parse(decision_to_json(*e.decision));
  } else {
    j["decision"] = nullptr;
  }
  return j;
}

ordered_json stats_json(const ReviewStats& s) {
  return ordered_json{{"total", s.total}, {"pending", s.pending}, {"accepted", s.accepted}, {"rejected", s.rejected}};
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

std::string image_to_bmp(const Image& img) {
  const auto h = static_cast<std::uint32_t>(img.height), w = static_cast<std::uint32_t>(img.width);
  const std::uint32_t stride = (w + 3) & ~3u;
  const std::uint32_t header = 14 + 40 + 256 * 4;
  std::string out;
  out += "BM";
  binio::put_u32(out, header + stride * h);
  binio::put_u32(out, 0);
  binio::put_u32(out, header);
  binio::put_u32(out, 40);
  binio::put_u32(out, w);
  binio::put_u32(out, h);
  put_u16(out, 1);
  put_u16(out, 8);
  binio::put_u32(out, 0);
  binio::put_u32(out, stride * h);
  binio::put_u32(out, 2835);
  binio::put_u32(out, 2835);
  binio::put_u32(out, 256);
  binio::put_u32(out, 0);
  for (int i = 0; i < 256; ++i) {
    const char g = static_cast<char>(i);
    out.push_back(g);
    out.push_back(g);
    out.push_back(g);
    out.push_back(0);
  }
  for (int r = img.height - 1; r >= 0; --r) {  // bottom-up rows
    for (int c = 0; c < img.width; ++c) {
      const float v = std::clamp(img.at(r, c), 0.0f, 1.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
    out.append(stride - w, '\0');
  }
  return out;
}

struct ReviewServer::Impl {
  ReviewSession& session;
  ReviewServerOptions opts;
  httplib::Server server;

  Impl(ReviewSession& s, ReviewServerOptions o) : session(s), opts(std::move(o)) { routes(); }

  void routes() {
    server.Get("/api/candidates", [this](const httplib::Request& req, httplib::Response& res) {
      CandidateFilter filter;
      filter.assigned_label = 1;
      std::size_t page = 1, page_size = opts.default_page_size;
      if (req.has_param("status")) {
        const std::string s = req.get_param_value("status");
        if (s != "all" && !s.empty()) {
          auto st = parse_status(s);
          if (!st) return send_error(res, 400, "bad status '" + s + "'");
          filter.status = st;
        }
      }
      if (req.has_param("label")) {
        const std::string s = req.get_param_value("label");
        if (s == "all") {
          filter.assigned_label.reset();
        } else if (s == "0" || s == "1") {
          filter.assigned_label = s == "1" ? 1 : 0;
        } else {
          return send_error(res, 400, "bad label '" + s + "'");
        }
      }
      if (req.has_param("page")) {
        auto v = parse_i64(req.get_param_value("page"));
        if (!v || *v < 1) return send_error(res, 400, "bad page");
        page = static_cast<std::size_t>(*v);
      }
      if (req.has_param("page_size")) {
        auto v = parse_i64(req.get_param_value("page_size"));
        if (!v || *v < 1 || static_cast<std::size_t>(*v) > opts.max_page_size)
          return send_error(res, 400, "bad page_size");
        page_size = static_cast<std::size_t>(*v);
      }
      const CandidatePage p = session.list(filter, page, page_size);
      ordered_json items = ordered_json::array();
      for (const auto& e : p.items) items.push_back(entry_json(e));
      send_json(res, 200,
                ordered_json{{"items", items}, {"total", p.total}, {"page", p.page}, {"page_size", p.page_size}});
    });

    server.Get(R"(/api/candidates/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = parse_i64(req.matches[1].str());
      if (!id) return send_error(res, 400, "bad id");
      auto e = session.get(*id);
      if (!e) return send_error(res, 404, "unknown candidate id " + std::to_string(*id));
      send_json(res, 200, entry_json(*e));
    });

    server.Get(R"(/api/images/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = parse_i64(req.matches[1].str());
      if (!id) return send_error(res, 400, "bad id");
      auto e = session.get(*id);
      if (!e) return send_error(res, 404, "unknown candidate id " + std::to_string(*id));
      const auto path = opts.image_root / e->candidate.img;
      std::string bytes;
      try {
        bytes = binio::read_file(path);
      } catch (const std::exception&) {
        return send_error(res, 404, "image not found for candidate " + std::to_string(*id));
      }
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "raw";
      if (format == "raw") {
        res.set_content(bytes, "application/octet-stream");
      } else if (format == "bmp") {
        try {
          res.set_content(image_to_bmp(decode_image(bytes)), "image/bmp");
        } catch (const std::exception& ex) {
          return send_error(res, 500, ex.what());
        }
      } else {
        return send_error(res, 400, "bad format '" + format + "'");
      }
    });

    server.Post(R"(/api/candidates/(-?\d+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = parse_i64(req.matches[1].str());
      if (!id) return send_error(res, 400, "bad id");
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const std::exception&) {
        return send_error(res, 400, "body is not JSON");
      }
      if (!body.is_object() || !body.contains("verdict") || !body["verdict"].is_string())
        return send_error(res, 400, "verdict is required");
      auto verdict = parse_verdict(body["verdict"].get<std::string>());
      if (!verdict) return send_error(res, 400, "verdict must be accepted or rejected");
      if (!body.contains("reviewer") || !body["reviewer"].is_string() || body["reviewer"].get<std::string>().empty())
        return send_error(res, 400, "reviewer is required");
      const std::string reviewer = body["reviewer"].get<std::string>();
      std::optional<std::string> note;
      if (body.contains("note") && !body["note"].is_null()) {
        if (!body["note"].is_string()) return send_error(res, 400, "note must be a string");
        note = body["note"].get<std::string>();
      }
      if (!session.get(*id)) return send_error(res, 404, "unknown candidate id " + std::to_string(*id));
      try {
        const DecisionAck ack = session.post_decision(*id, *verdict, reviewer, note);
        send_json(res, 200,
                  ordered_json{{"id", ack.id},
                               {"verdict", std::string(to_string(ack.verdict))},
                               {"appended", ack.appended},
                               {"superseded", ack.superseded},
                               {"stats", stats_json(session.stats())}});
      } catch (const std::exception& ex) {
        send_error(res, 500, ex.what());
      }
    });

    server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, stats_json(session.stats()));
    });

    server.Get("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string v = req.has_param("verdict") ? req.get_param_value("verdict") : "accepted";
      auto verdict = parse_verdict(v);
      if (!verdict) return send_error(res, 400, "bad verdict '" + v + "'");
      res.set_content(to_jsonl(session.export_verdict(*verdict)), "application/x-ndjson");
    });

    if (opts.static_dir) server.set_mount_point("/", opts.static_dir->string());
  }
};

ReviewServer::ReviewServer(ReviewSession& session, ReviewServerOptions opts)
    : impl_(std::make_unique<Impl>(session, std::move(opts))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start() {
  auto& o = impl_->opts;
  port_ = o.port == 0 ? impl_->server.bind_to_any_port(o.host) : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
  if (port_ <= 0) throw Error("review server: cannot bind " + o.host + ":" + std::to_string(o.port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ReviewServer::run() {
  auto& o = impl_->opts;
  port_ = o.port == 0 ? impl_->server.bind_to_any_port(o.host) : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
  if (port_ <= 0) throw Error("review server: cannot bind " + o.host + ":" + std::to_string(o.port));
  impl_->server.listen_after_bind();
}

void ReviewServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void ReviewServer::request_stop() {
  if (impl_) impl_->server.stop();
}

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace memessl
