#pragma once

// HTTP front of a ReviewSession.
//
//   GET  /api/candidates?status=&label=&page=&page_size=
//   GET  /api/candidates/{id}
//   GET  /api/images/{id}[?format=bmp]
//   POST /api/candidates/{id}/decision   {"verdict","reviewer","note"}
//   GET  /api/stats
//   GET  /api/export?verdict=accepted|rejected   (JSONL)
//
// status defaults to all; label defaults to 1 ("all" lists both labels).
// Anything else under / is served from the static UI directory when set.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "memessl/image.hpp"
#include "memessl/review.hpp"

namespace memessl {

struct ReviewServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 binds an ephemeral port
  // Candidate img paths resolve against this directory.
  std::filesystem::path image_root = ".";
  std::optional<std::filesystem::path> static_dir;
  std::size_t default_page_size = 50;
  std::size_t max_page_size = 1000;
};

class ReviewServer {
 public:
  ReviewServer(ReviewSession& session, ReviewServerOptions opts);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds and serves on a background thread; returns the bound port. Throws
  // Error when the address cannot be bound.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  // Asks the listener to return without joining it (signal handlers).
  void request_stop();
  // Blocks until a started server has stopped.
  void wait();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

// 8-bit grayscale BMP of an intensity image (values clamped to [0,1]).
std::string image_to_bmp(const Image& img);

}  // namespace memessl
