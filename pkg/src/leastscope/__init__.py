"""Least-privilege authorization gateway for tool-calling agents.

Submodules:
  scopes    scope maps, hierarchy reconstruction, stats
  solver    exact weighted-cover solving over hierarchy nodes
  grants    session-forked grant state, decision log, credential vault
  gateway   plan intake, permission prompts, call interception
  services  mock tool services that only accept gateway traffic
  scenarios scripted agent driver producing interaction traces
  auditor   independent trace-soundness checker
  simulate  persona simulations and confirmation-effort curves
  audit     connector overprivilege reports
  cli       command-line interface
  api       HTTP surface for agents and the approval console
"""

__version__ = "0.1.0"
