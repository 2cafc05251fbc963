#include "invprob/cli.hpp"

int main(int argc, char** argv) { return invprob::cli::main_entry(argc, argv); }
