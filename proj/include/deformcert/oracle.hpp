#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "deformcert/classifier.hpp"

// Newline-delimited JSON oracle protocol. One request line, one response line:
//
//   {"id":N,"clouds":[[[x,y,z],...],...]}
//   {"id":N,"labels":[k,...]}   or   {"id":N,"error":"msg"}
//
// Strictly request/response on a connection, no pipelining.

namespace deformcert {

inline constexpr std::size_t kDefaultMaxFrameBytes = 64u << 20;

/// Malformed frame. Carries the request id when it could be recovered.
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what, std::optional<std::uint64_t> id = std::nullopt)
        : std::runtime_error(what), id_(id) {}
    std::optional<std::uint64_t> id() const { return id_; }

private:
    std::optional<std::uint64_t> id_;
};

/// Connect, read or write failure on the underlying channel (including timeouts).
class TransportError : public ClassifierError {
public:
    using ClassifierError::ClassifierError;
};

struct OracleRequest {
    std::uint64_t id = 0;
    std::vector<PointCloud> clouds;
};

struct OracleResponse {
    std::uint64_t id = 0;
    std::vector<Label> labels;
    std::optional<std::string> error;
};

// Encoders return the line including its trailing '\n'.
std::string encode_request(std::uint64_t id, std::span<const PointCloud> clouds);
std::string encode_response(std::uint64_t id, std::span<const Label> labels);
std::string encode_error(std::uint64_t id, std::string_view message);

OracleRequest decode_request(std::string_view line);
OracleResponse decode_response(std::string_view line);

/// Response line for one request line. An empty optional means the frame was
/// not parsable far enough to recover its id; the server then drops the connection.
std::optional<std::string> answer_frame(const Classifier& classifier, std::string_view line);

struct ServeOptions {
    std::size_t max_frame_bytes = kDefaultMaxFrameBytes;
};

enum class ServeStatus {
    Closed,         // peer closed its side
    ProtocolError,  // unparsable or oversized frame; connection dropped
};

/// Serves frames from `in` to `out` until EOF or an unrecoverable frame.
ServeStatus serve_stream(const Classifier& classifier, std::istream& in, std::ostream& out,
                         const ServeOptions& options = {});

/// Accept loop on a TCP port. Each connection is one ordered stream served on its own thread.
class TcpOracleServer {
public:
    /// Binds and listens immediately; port 0 picks an ephemeral port.
    TcpOracleServer(const Classifier& classifier, const std::string& host, std::uint16_t port,
                    ServeOptions options = {});
    ~TcpOracleServer();

    TcpOracleServer(const TcpOracleServer&) = delete;
    TcpOracleServer& operator=(const TcpOracleServer&) = delete;

    std::uint16_t port() const { return port_; }

    /// Blocks until stop() is called.
    void run();
    void stop() { stopping_ = true; }

private:
    void serve_connection(int fd);

    const Classifier& classifier_;
    ServeOptions options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::mutex workers_mutex_;
    std::vector<std::jthread> workers_;
};

struct OracleEndpoint {
    enum class Transport { Tcp, Stdio };

    Transport transport = Transport::Tcp;
    std::string host;        // tcp
    std::uint16_t port = 0;  // tcp
    std::string command;     // stdio: shell command whose stdin/stdout speak the protocol

    /// "tcp:HOST:PORT" or "stdio:CMD".
    static OracleEndpoint parse(std::string_view spec);
};

struct ConnectOptions {
    std::chrono::milliseconds timeout{30000};  // per batch
    std::size_t max_frame_bytes = kDefaultMaxFrameBytes;
};

/// Base classifier answered by a remote peer. Serial: one frame in flight per connection.
/// After a transport or protocol failure the stream may be out of step, so
/// every later call fails fast with TransportError.
class OracleClient final : public Classifier {
public:
    class Channel;

    OracleClient(std::unique_ptr<Channel> channel, ConnectOptions options);
    ~OracleClient() override;

    bool serial() const override { return true; }

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override;

private:
    std::unique_ptr<Channel> channel_;
    ConnectOptions options_;
    mutable std::uint64_t next_id_ = 1;
    mutable bool broken_ = false;
};

std::unique_ptr<OracleClient> connect(const OracleEndpoint& endpoint, const ConnectOptions& options = {});

}  // namespace deformcert
