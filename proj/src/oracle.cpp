#include "deformcert/oracle.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace deformcert {

namespace {

using Clock = std::chrono::steady_clock;

void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    const std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
    out.append(text);
    if (text.find_first_of(".e") == std::string_view::npos) out.append(".0");
}

void append_uint(std::string& out, std::uint64_t v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

// Milliseconds left until the deadline, clamped to [0, INT_MAX]; -1 means no deadline.
int poll_budget(std::optional<Clock::time_point> deadline, int slice_ms) {
    if (!deadline) return slice_ms;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
    if (left <= 0) return 0;
    return slice_ms < 0 ? static_cast<int>(std::min<long long>(left, 1 << 30))
                        : static_cast<int>(std::min<long long>(left, slice_ms));
}

void write_all(int fd, std::string_view data, std::optional<Clock::time_point> deadline) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        pollfd pfd{fd, POLLOUT, 0};
        const int budget = poll_budget(deadline, -1);
        if (deadline && budget == 0) throw TransportError("oracle write timed out");
        const int ready = ::poll(&pfd, 1, budget);
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("poll"));
        }
        if (ready == 0) continue;
        const ssize_t n = ::write(fd, data.data() + sent, data.size() - sent);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError(errno_text("oracle write failed"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}

    /// Next line without its '\n'; nullopt on EOF (or when `keep_going` turns false).
    /// Throws ProtocolError when a line exceeds max_bytes, TransportError on timeout or read errors.
    std::optional<std::string> next(std::size_t max_bytes, std::optional<Clock::time_point> deadline,
                                    const std::function<bool()>& keep_going = {}) {
        for (;;) {
            if (const auto nl = buffer_.find('\n', scanned_); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                scanned_ = 0;
                return line;
            }
            scanned_ = buffer_.size();
            if (buffer_.size() > max_bytes) throw ProtocolError("frame exceeds the maximum frame size");
            if (keep_going && !keep_going()) return std::nullopt;
            pollfd pfd{fd_, POLLIN, 0};
            const int budget = poll_budget(deadline, keep_going ? 200 : -1);
            if (deadline && budget == 0) throw TransportError("oracle read timed out");
            const int ready = ::poll(&pfd, 1, budget);
            if (ready < 0) {
                if (errno == EINTR) continue;
                throw TransportError(errno_text("poll"));
            }
            if (ready == 0) continue;
            char chunk[65536];
            const ssize_t n = ::read(fd_, chunk, sizeof(chunk));
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw TransportError(errno_text("oracle read failed"));
            }
            if (n == 0) {
                if (!buffer_.empty()) throw ProtocolError("connection closed mid-frame");
                return std::nullopt;
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    int fd_;
    std::string buffer_;
    std::size_t scanned_ = 0;
};

std::vector<PointCloud> parse_clouds(const nlohmann::json& clouds, std::uint64_t id) {
    if (!clouds.is_array()) throw ProtocolError("\"clouds\" must be an array", id);
    std::vector<PointCloud> out;
    out.reserve(clouds.size());
    for (const auto& cloud : clouds) {
        if (!cloud.is_array() || cloud.empty()) throw ProtocolError("each cloud must be a non-empty array", id);
        std::vector<Vec3> points;
        points.reserve(cloud.size());
        for (const auto& p : cloud) {
            if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number()) {
                throw ProtocolError("each point must be an array of three numbers", id);
            }
            points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
        }
        try {
            out.emplace_back(std::move(points));
        } catch (const ShapeError& e) {
            throw ProtocolError(e.what(), id);
        }
    }
    return out;
}

}  // namespace

std::string encode_request(std::uint64_t id, std::span<const PointCloud> clouds) {
    std::string out;
    std::size_t points = 0;
    for (const auto& c : clouds) points += c.size();
    out.reserve(32 + points * 64);
    out.append("{\"id\":");
    append_uint(out, id);
    out.append(",\"clouds\":[");
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        if (i > 0) out.push_back(',');
        out.push_back('[');
        for (std::size_t j = 0; j < clouds[i].size(); ++j) {
            if (j > 0) out.push_back(',');
            const Vec3& p = clouds[i][j];
            out.push_back('[');
            append_number(out, p.x);
            out.push_back(',');
            append_number(out, p.y);
            out.push_back(',');
            append_number(out, p.z);
            out.push_back(']');
        }
        out.push_back(']');
    }
    out.append("]}\n");
    return out;
}

std::string encode_response(std::uint64_t id, std::span<const Label> labels) {
    std::string out = "{\"id\":";
    append_uint(out, id);
    out.append(",\"labels\":[");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) out.push_back(',');
        out.append(std::to_string(labels[i]));
    }
    out.append("]}\n");
    return out;
}

std::string encode_error(std::uint64_t id, std::string_view message) {
    std::string out = "{\"id\":";
    append_uint(out, id);
    out.append(",\"error\":");
    out.append(nlohmann::json(std::string(message)).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
    out.append("}\n");
    return out;
}

OracleRequest decode_request(std::string_view line) {
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object()) throw ProtocolError("request is not a JSON object");
    const auto id_it = doc.find("id");
    if (id_it == doc.end() || !id_it->is_number_unsigned()) {
        throw ProtocolError("request has no unsigned integer \"id\"");
    }
    OracleRequest request;
    request.id = id_it->get<std::uint64_t>();
    const auto clouds_it = doc.find("clouds");
    if (clouds_it == doc.end()) throw ProtocolError("request has no \"clouds\"", request.id);
    request.clouds = parse_clouds(*clouds_it, request.id);
    return request;
}

OracleResponse decode_response(std::string_view line) {
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ProtocolError("response is not a JSON object");
    const auto id_it = doc.find("id");
    if (id_it == doc.end() || !id_it->is_number_unsigned()) {
        throw ProtocolError("response has no unsigned integer \"id\"");
    }
    OracleResponse response;
    response.id = id_it->get<std::uint64_t>();
    if (const auto err = doc.find("error"); err != doc.end()) {
        response.error = err->is_string() ? err->get<std::string>() : err->dump();
        return response;
    }
    const auto labels = doc.find("labels");
    if (labels == doc.end() || !labels->is_array()) {
        throw ProtocolError("response has neither \"labels\" nor \"error\"", response.id);
    }
    for (const auto& l : *labels) {
        if (!l.is_number_integer()) throw ProtocolError("labels must be integers", response.id);
        response.labels.push_back(l.get<Label>());
    }
    return response;
}

std::optional<std::string> answer_frame(const Classifier& classifier, std::string_view line) {
    OracleRequest request;
    try {
        request = decode_request(line);
    } catch (const ProtocolError& e) {
        if (!e.id()) return std::nullopt;
        return encode_error(*e.id(), e.what());
    }
    try {
        const auto labels = classifier.classify(request.clouds);
        return encode_response(request.id, labels);
    } catch (const std::exception& e) {
        return encode_error(request.id, e.what());
    }
}

ServeStatus serve_stream(const Classifier& classifier, std::istream& in, std::ostream& out,
                         const ServeOptions& options) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() > options.max_frame_bytes) return ServeStatus::ProtocolError;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto reply = answer_frame(classifier, line);
        if (!reply) return ServeStatus::ProtocolError;
        out << *reply;
        out.flush();
    }
    return ServeStatus::Closed;
}

// ---------------------------------------------------------------------------
// TCP server

TcpOracleServer::TcpOracleServer(const Classifier& classifier, const std::string& host, std::uint16_t port,
                                 ServeOptions options)
    : classifier_(classifier), options_(options) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* result = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &result);
        rc != 0) {
        throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, &::freeaddrinfo);
    listen_fd_ = ::socket(result->ai_family, result->ai_socktype, result->ai_protocol);
    if (listen_fd_ < 0) throw TransportError(errno_text("socket"));
    const int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    if (::bind(listen_fd_, result->ai_addr, result->ai_addrlen) < 0 || ::listen(listen_fd_, 16) < 0) {
        const std::string msg = errno_text("bind/listen");
        ::close(listen_fd_);
        throw TransportError(msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

TcpOracleServer::~TcpOracleServer() {
    stop();
    {
        std::lock_guard lock(workers_mutex_);
        workers_.clear();  // joins
    }
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpOracleServer::run() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, 200);
        if (ready <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        const int yes = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
        std::lock_guard lock(workers_mutex_);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void TcpOracleServer::serve_connection(int fd) {
    LineReader reader(fd);
    try {
        for (;;) {
            auto line = reader.next(options_.max_frame_bytes, std::nullopt, [this] { return !stopping_.load(); });
            if (!line) break;
            if (!line->empty() && line->back() == '\r') line->pop_back();
            if (line->empty()) continue;
            const auto reply = answer_frame(classifier_, *line);
            if (!reply) break;
            write_all(fd, *reply, std::nullopt);
        }
    } catch (const std::exception&) {
        // Oversized frame or dead peer: drop this connection only.
    }
    ::close(fd);
}

// ---------------------------------------------------------------------------
// Client

class OracleClient::Channel {
public:
    Channel(int read_fd, int write_fd, pid_t child) : read_fd_(read_fd), write_fd_(write_fd), child_(child), reader_(read_fd) {}

    ~Channel() {
        if (write_fd_ != read_fd_) ::close(write_fd_);
        ::close(read_fd_);
        if (child_ > 0) {
            // Closing stdin asks the child to exit; give it a moment, then insist.
            for (int i = 0; i < 100; ++i) {
                if (::waitpid(child_, nullptr, WNOHANG) != 0) return;
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            }
            ::kill(child_, SIGKILL);
            ::waitpid(child_, nullptr, 0);
        }
    }

    Channel(const Channel&) = delete;
    Channel& operator=(const Channel&) = delete;

    std::string exchange(std::string_view frame, std::chrono::milliseconds timeout, std::size_t max_bytes) {
        const auto deadline = Clock::now() + timeout;
        write_all(write_fd_, frame, deadline);
        auto line = reader_.next(max_bytes, deadline);
        if (!line) throw TransportError("oracle peer closed the connection");
        return std::move(*line);
    }

private:
    int read_fd_;
    int write_fd_;
    pid_t child_;
    LineReader reader_;
};

OracleClient::OracleClient(std::unique_ptr<Channel> channel, ConnectOptions options)
    : channel_(std::move(channel)), options_(options) {}

OracleClient::~OracleClient() = default;

std::vector<Label> OracleClient::classify_batch(std::span<const PointCloud> clouds) const {
    if (clouds.empty()) return {};
    if (broken_) throw TransportError("oracle connection unusable after an earlier failure");
    const std::uint64_t id = next_id_++;
    OracleResponse response;
    try {
        const std::string reply = channel_->exchange(encode_request(id, clouds), options_.timeout,
                                                     options_.max_frame_bytes);
        response = decode_response(reply);
        if (response.id != id) {
            throw ProtocolError("oracle answered id " + std::to_string(response.id) + " to request " +
                                std::to_string(id));
        }
    } catch (...) {
        broken_ = true;
        throw;
    }
    if (response.error) throw ClassifierError("oracle error: " + *response.error);
    if (response.labels.size() != clouds.size()) {
        throw ProtocolError("oracle returned " + std::to_string(response.labels.size()) + " labels for " +
                                std::to_string(clouds.size()) + " clouds",
                            id);
    }
    return response.labels;
}

OracleEndpoint OracleEndpoint::parse(std::string_view spec) {
    OracleEndpoint ep;
    if (spec.starts_with("stdio:")) {
        ep.transport = Transport::Stdio;
        ep.command = std::string(spec.substr(6));
        if (ep.command.empty()) throw std::invalid_argument("stdio endpoint needs a command");
        return ep;
    }
    if (spec.starts_with("tcp:")) {
        const std::string_view rest = spec.substr(4);
        const auto colon = rest.rfind(':');
        if (colon == std::string_view::npos) throw std::invalid_argument("tcp endpoint must be tcp:HOST:PORT");
        ep.transport = Transport::Tcp;
        ep.host = std::string(rest.substr(0, colon));
        unsigned port = 0;
        const auto port_text = rest.substr(colon + 1);
        const auto res = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
        if (res.ec != std::errc() || res.ptr != port_text.data() + port_text.size() || port == 0 || port > 65535) {
            throw std::invalid_argument("bad tcp port in endpoint: " + std::string(spec));
        }
        ep.port = static_cast<std::uint16_t>(port);
        return ep;
    }
    throw std::invalid_argument("oracle endpoint must be tcp:HOST:PORT or stdio:CMD");
}

std::unique_ptr<OracleClient> connect(const OracleEndpoint& endpoint, const ConnectOptions& options) {
    ignore_sigpipe();
    if (endpoint.transport == OracleEndpoint::Transport::Tcp) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* result = nullptr;
        const std::string service = std::to_string(endpoint.port);
        if (const int rc = ::getaddrinfo(endpoint.host.c_str(), service.c_str(), &hints, &result); rc != 0) {
            throw TransportError("cannot resolve " + endpoint.host + ": " + ::gai_strerror(rc));
        }
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, &::freeaddrinfo);
        for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
                const int yes = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
                return std::make_unique<OracleClient>(std::make_unique<OracleClient::Channel>(fd, fd, -1), options);
            }
            ::close(fd);
        }
        throw TransportError("cannot connect to " + endpoint.host + ":" + service);
    }

    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw TransportError(errno_text("pipe"));
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw TransportError(errno_text("pipe"));
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError(errno_text("fork"));
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", endpoint.command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    return std::make_unique<OracleClient>(
        std::make_unique<OracleClient::Channel>(from_child[0], to_child[1], pid), options);
}

}  // namespace deformcert
