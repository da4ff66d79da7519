#include "nextbasket/cli.hpp"

int main(int argc, char** argv) { return nextbasket::cli::run(argc, argv); }
